//! Nuisance models: propensity score `e(X)`, double-sampling probability
//! `eta(Z, X)` and MAR observance probability `pi(Z, X)`.

use std::collections::BTreeMap;
use std::fmt;
use std::sync::Arc;

use nalgebra::DMatrix;
use serde::{Deserialize, Serialize};

use super::logistic::{expit, fit_logistic, logit, IrlsOptions, LogisticFit};
use crate::data::{Dataset, ObservedRecord};
use crate::error::{Error, Result};

/// Probabilities passed downstream are clipped into `[PROB_CLIP, 1 - PROB_CLIP]`.
pub const PROB_CLIP: f64 = 1e-6;

pub fn clip_probability(p: f64) -> f64 {
    p.clamp(PROB_CLIP, 1.0 - PROB_CLIP)
}

/// Columns entering a logistic nuisance model. The intercept is always first.
#[derive(Debug, Clone, PartialEq, Eq, Serialize, Deserialize)]
pub struct DesignSpec {
    pub include_z: bool,
    /// Covariate indices; `None` means all `p` covariates.
    pub covariates: Option<Vec<usize>>,
}

impl DesignSpec {
    /// Intercept plus every covariate.
    pub fn covariates_only() -> Self {
        Self { include_z: false, covariates: None }
    }

    /// Intercept, treatment and every covariate.
    pub fn with_treatment() -> Self {
        Self { include_z: true, covariates: None }
    }

    fn covariate_indices(&self, p: usize) -> Vec<usize> {
        match &self.covariates {
            Some(idx) => idx.clone(),
            None => (0..p).collect(),
        }
    }

    pub fn width(&self, p: usize) -> usize {
        1 + usize::from(self.include_z) + self.covariate_indices(p).len()
    }

    pub fn row(&self, z: bool, x: &[f64]) -> Vec<f64> {
        let mut row = Vec::with_capacity(self.width(x.len()));
        row.push(1.0);
        if self.include_z {
            row.push(if z { 1.0 } else { 0.0 });
        }
        match &self.covariates {
            Some(idx) => row.extend(idx.iter().map(|&j| x[j])),
            None => row.extend_from_slice(x),
        }
        row
    }

    /// `coefficients · row(z, x)` without materializing the row.
    pub fn linear_predictor(&self, coefficients: &[f64], z: bool, x: &[f64]) -> f64 {
        let mut b = coefficients.iter();
        let mut acc = *b.next().expect("intercept");
        if self.include_z {
            acc += b.next().expect("treatment coefficient") * if z { 1.0 } else { 0.0 };
        }
        match &self.covariates {
            Some(idx) => idx.iter().zip(b).for_each(|(&j, c)| acc += c * x[j]),
            None => x.iter().zip(b).for_each(|(v, c)| acc += c * v),
        }
        acc
    }

    pub fn column_names(&self, d: &Dataset) -> Vec<String> {
        let mut names = vec!["(intercept)".to_string()];
        if self.include_z {
            names.push("z".into());
        }
        names.extend(self.covariate_indices(d.p).into_iter().map(|j| d.covariate_name(j)));
        names
    }

    fn check(&self, p: usize) -> Result<()> {
        if let Some(idx) = &self.covariates {
            if let Some(&j) = idx.iter().find(|&&j| j >= p) {
                return Err(Error::Configuration(format!(
                    "design refers to covariate {j} but p={p}"
                )));
            }
        }
        Ok(())
    }
}

/// A probability model that can be evaluated at `(z, x)`.
///
/// `gradient_features` returns `d logit(p) / d params`; models whose
/// probability does not depend on free parameters at `(z, x)` return an empty
/// vector.
pub trait ProbabilityModel {
    /// Unclipped probability, or `None` if the model is undefined at `(z, x)`.
    fn probability(&self, z: bool, x: &[f64]) -> Option<f64>;
    fn n_params(&self) -> usize;
    fn gradient_features(&self, z: bool, x: &[f64]) -> Vec<f64>;
}

#[derive(Debug, Clone, PartialEq, Serialize, Deserialize)]
pub struct LogisticModel {
    pub fit: LogisticFit,
    pub design: DesignSpec,
    pub column_names: Vec<String>,
}

impl LogisticModel {
    pub fn coefficients(&self) -> &[f64] {
        &self.fit.coefficients
    }
}

impl ProbabilityModel for LogisticModel {
    fn probability(&self, z: bool, x: &[f64]) -> Option<f64> {
        Some(expit(self.design.linear_predictor(&self.fit.coefficients, z, x)))
    }

    fn n_params(&self) -> usize {
        self.fit.coefficients.len()
    }

    fn gradient_features(&self, z: bool, x: &[f64]) -> Vec<f64> {
        self.design.row(z, x)
    }
}

fn fit_design(
    records: &[&ObservedRecord],
    labels: &[bool],
    design: &DesignSpec,
    d: &Dataset,
    opts: &IrlsOptions,
) -> Result<LogisticModel> {
    design.check(d.p)?;
    let names = design.column_names(d);
    let k = design.width(d.p);
    let x = DMatrix::from_row_iterator(
        records.len(),
        k,
        records.iter().flat_map(|r| design.row(r.z, &r.x)),
    );
    let fit = fit_logistic(&x, labels, opts).map_err(|e| match e {
        Error::Separation { column, detail } => {
            let name = column
                .parse::<usize>()
                .ok()
                .and_then(|j| names.get(j).cloned())
                .unwrap_or(column);
            Error::Separation { column: name, detail }
        }
        other => other,
    })?;
    Ok(LogisticModel { fit, design: design.clone(), column_names: names })
}

/// Logistic fit of `z` on the propensity design over all records.
pub fn fit_propensity(d: &Dataset, design: &DesignSpec, opts: &IrlsOptions) -> Result<LogisticModel> {
    if d.is_empty() {
        return Err(Error::NothingToFit("dataset is empty".into()));
    }
    let records: Vec<&ObservedRecord> = d.records.iter().collect();
    let labels: Vec<bool> = d.records.iter().map(|r| r.z).collect();
    fit_design(&records, &labels, design, d, opts)
}

/// Logistic fit of `r` on `(1, z, x)` (or the given design) over all records.
pub fn fit_mar_observance(
    d: &Dataset,
    design: &DesignSpec,
    opts: &IrlsOptions,
) -> Result<LogisticModel> {
    if d.is_empty() {
        return Err(Error::NothingToFit("dataset is empty".into()));
    }
    let records: Vec<&ObservedRecord> = d.records.iter().collect();
    let labels: Vec<bool> = d.records.iter().map(|r| r.r).collect();
    fit_design(&records, &labels, design, d, opts)
}

/// A propensity score supplied as a known function of the covariates.
#[derive(Clone)]
pub struct KnownPropensity {
    label: String,
    func: Arc<dyn Fn(&[f64]) -> f64 + Send + Sync>,
}

impl KnownPropensity {
    pub fn new(label: impl Into<String>, func: impl Fn(&[f64]) -> f64 + Send + Sync + 'static) -> Self {
        Self { label: label.into(), func: Arc::new(func) }
    }

    /// `e(x) = expit(c0 + c1 x1 + ... + cp xp)`.
    pub fn logistic(coefficients: Vec<f64>) -> Self {
        let label = format!("logistic{coefficients:?}");
        let fit = LogisticFit {
            coefficients,
            converged: true,
            iterations: 0,
            score_norm: 0.0,
            loglik_trace: Vec::new(),
        };
        let design = DesignSpec::covariates_only();
        Self::new(label, move |x: &[f64]| expit(design.linear_predictor(&fit.coefficients, false, x)))
    }

    /// Treats a fitted propensity model as known; evaluates bit-identically to it.
    pub fn from_model(model: LogisticModel) -> Self {
        let label = format!("fixed{:?}", model.fit.coefficients);
        Self::new(label, move |x: &[f64]| model.probability(false, x).expect("logistic model is total"))
    }

    pub fn label(&self) -> &str {
        &self.label
    }

    pub fn evaluate(&self, x: &[f64]) -> f64 {
        (self.func)(x)
    }
}

impl ProbabilityModel for KnownPropensity {
    fn probability(&self, _z: bool, x: &[f64]) -> Option<f64> {
        Some(self.evaluate(x))
    }

    fn n_params(&self) -> usize {
        0
    }

    fn gradient_features(&self, _z: bool, _x: &[f64]) -> Vec<f64> {
        Vec::new()
    }
}

impl fmt::Debug for KnownPropensity {
    fn fmt(&self, f: &mut fmt::Formatter<'_>) -> fmt::Result {
        f.debug_struct("KnownPropensity").field("label", &self.label).finish()
    }
}

/// Dichotomizes covariates to form `(z, cell)` strata.
#[derive(Debug, Clone, PartialEq, Serialize, Deserialize)]
pub struct StrataRule {
    /// `(covariate index, threshold)`; the bit is set when `x[j] >= threshold`.
    pub thresholds: Vec<(usize, f64)>,
}

impl StrataRule {
    pub fn key(&self, z: bool, x: &[f64]) -> StratumKey {
        let cell = self
            .thresholds
            .iter()
            .enumerate()
            .fold(0u32, |acc, (b, &(j, t))| acc | (u32::from(x[j] >= t) << b));
        StratumKey { z, cell }
    }

    pub fn n_strata(&self) -> usize {
        2usize << self.thresholds.len()
    }
}

#[derive(Debug, Clone, Copy, PartialEq, Eq, PartialOrd, Ord, Hash, Serialize, Deserialize)]
pub struct StratumKey {
    pub z: bool,
    /// Bit `b` is set when covariate `thresholds[b].0` reached its threshold.
    pub cell: u32,
}

#[derive(Debug, Clone, Copy, PartialEq, Eq, Serialize, Deserialize)]
pub struct StratumCount {
    pub selected: usize,
    pub eligible: usize,
}

/// Saturated model for `eta`: one empirical proportion per observed stratum.
#[derive(Debug, Clone, PartialEq, Serialize, Deserialize)]
pub struct StratumModel {
    pub rule: StrataRule,
    pub strata: Vec<StratumKey>,
    pub proportions: Vec<f64>,
    pub counts: Vec<StratumCount>,
    /// Strata with `0 < proportion < 1`, i.e. the free parameters.
    free: Vec<usize>,
}

impl StratumModel {
    pub fn stratum_index(&self, key: StratumKey) -> Option<usize> {
        self.strata.binary_search(&key).ok()
    }

    pub fn proportion(&self, key: StratumKey) -> Option<f64> {
        self.stratum_index(key).map(|i| self.proportions[i])
    }
}

impl ProbabilityModel for StratumModel {
    fn probability(&self, z: bool, x: &[f64]) -> Option<f64> {
        self.proportion(self.rule.key(z, x))
    }

    fn n_params(&self) -> usize {
        self.free.len()
    }

    fn gradient_features(&self, z: bool, x: &[f64]) -> Vec<f64> {
        let mut u = vec![0.0; self.free.len()];
        if let Some(i) = self.stratum_index(self.rule.key(z, x)) {
            if let Ok(pos) = self.free.binary_search(&i) {
                u[pos] = 1.0;
            }
        }
        u
    }
}

#[derive(Debug, Clone, PartialEq, Serialize, Deserialize)]
#[serde(tag = "kind", rename_all = "snake_case")]
pub enum EtaDesign {
    Logistic(DesignSpec),
    /// Saturated strata model. `allow_census` admits strata in which every
    /// eligible record was sampled (`eta = 1`).
    Strata { rule: StrataRule, allow_census: bool },
}

impl Default for EtaDesign {
    fn default() -> Self {
        EtaDesign::Logistic(DesignSpec::with_treatment())
    }
}

#[derive(Debug, Clone, PartialEq, Serialize, Deserialize)]
#[serde(tag = "kind", rename_all = "snake_case")]
pub enum EtaModel {
    Logistic(LogisticModel),
    Strata(StratumModel),
}

impl EtaModel {
    pub fn as_model(&self) -> &dyn ProbabilityModel {
        match self {
            EtaModel::Logistic(m) => m,
            EtaModel::Strata(m) => m,
        }
    }
}

/// Model for `eta(z, x) = P(S = 1 | Z = z, X = x, R = 0)`, fit on the `r = 0` records.
pub fn fit_double_sampling(d: &Dataset, design: &EtaDesign, opts: &IrlsOptions) -> Result<EtaModel> {
    let subset: Vec<&ObservedRecord> = d.records.iter().filter(|r| !r.r).collect();
    if subset.is_empty() {
        return Err(Error::NothingToFit("no records with R=0".into()));
    }
    match design {
        EtaDesign::Logistic(spec) => {
            let labels: Vec<bool> = subset.iter().map(|r| r.s).collect();
            fit_design(&subset, &labels, spec, d, opts).map(EtaModel::Logistic)
        }
        EtaDesign::Strata { rule, allow_census } => {
            if let Some(&(j, _)) = rule.thresholds.iter().find(|(j, _)| *j >= d.p) {
                return Err(Error::Configuration(format!(
                    "strata rule refers to covariate {j} but p={}",
                    d.p
                )));
            }
            let mut tally: BTreeMap<StratumKey, StratumCount> = BTreeMap::new();
            for r in &subset {
                let c = tally
                    .entry(rule.key(r.z, &r.x))
                    .or_insert(StratumCount { selected: 0, eligible: 0 });
                c.eligible += 1;
                c.selected += usize::from(r.s);
            }
            let mut strata = Vec::with_capacity(tally.len());
            let mut proportions = Vec::with_capacity(tally.len());
            let mut counts = Vec::with_capacity(tally.len());
            let mut free = Vec::new();
            for (i, (key, c)) in tally.into_iter().enumerate() {
                let prop = c.selected as f64 / c.eligible as f64;
                if c.selected == 0 || (c.selected == c.eligible && !allow_census) {
                    return Err(Error::Positivity(format!(
                        "stratum (z={}, cell={}) has {} of {} eligible records double-sampled; \
                         double-sampling probabilities must lie strictly between 0 and 1",
                        u8::from(key.z),
                        key.cell,
                        c.selected,
                        c.eligible
                    )));
                }
                if c.selected < c.eligible {
                    free.push(i);
                }
                strata.push(key);
                proportions.push(prop);
                counts.push(c);
            }
            Ok(EtaModel::Strata(StratumModel {
                rule: rule.clone(),
                strata,
                proportions,
                counts,
                free,
            }))
        }
    }
}

/// Coefficients of the saturated model on the logit scale, for reporting.
pub fn stratum_logits(model: &StratumModel) -> Vec<f64> {
    model.proportions.iter().map(|&p| logit(p)).collect()
}
