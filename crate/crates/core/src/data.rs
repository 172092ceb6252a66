//! Observed-data model for a double-sampled study.
//!
//! Each unit carries an initial observance indicator `r`, a double-sampling
//! indicator `s` (only possible when `r = 0`), the treatment `z`, covariates
//! `x`, and the outcome `y`, which is available exactly when `r + s = 1`.

use std::fmt;
use std::str::FromStr;

use serde::{Deserialize, Serialize};

use crate::error::{Error, Result};

/// One study unit: `(R, S, (R+S)Y, Z, X)`.
#[derive(Debug, Clone, PartialEq, Serialize, Deserialize)]
pub struct ObservedRecord {
    /// Outcome, present only when it was observed initially or double-sampled.
    pub y: Option<f64>,
    pub z: bool,
    pub x: Vec<f64>,
    pub r: bool,
    pub s: bool,
}

impl ObservedRecord {
    pub fn new(y: Option<f64>, z: bool, x: Vec<f64>, r: bool, s: bool) -> Self {
        Self { y, z, x, r, s }
    }

    /// A record whose outcome was observed in the first phase.
    pub fn observed(y: f64, z: bool, x: Vec<f64>) -> Self {
        Self::new(Some(y), z, x, true, false)
    }

    /// True when the outcome should be available (`r + s = 1`).
    pub fn outcome_expected(&self) -> bool {
        self.r || self.s
    }
}

/// Ordered collection of records sharing a covariate dimension `p`.
#[derive(Debug, Clone, PartialEq, Serialize, Deserialize)]
pub struct Dataset {
    pub records: Vec<ObservedRecord>,
    pub p: usize,
    #[serde(default, skip_serializing_if = "Option::is_none")]
    pub column_names: Option<Vec<String>>,
}

impl Dataset {
    /// Builds a dataset without checking invariants; see [`validate_dataset`].
    pub fn new(records: Vec<ObservedRecord>, p: usize) -> Self {
        Self { records, p, column_names: None }
    }

    /// Builds a dataset and rejects it if any invariant is violated.
    pub fn validated(records: Vec<ObservedRecord>, p: usize) -> Result<Self> {
        let d = Self::new(records, p);
        let report = validate_dataset(&d);
        if report.is_valid() {
            Ok(d)
        } else {
            Err(Error::InvalidDataset(report.summary()))
        }
    }

    pub fn with_column_names(mut self, names: Vec<String>) -> Self {
        self.column_names = Some(names);
        self
    }

    pub fn len(&self) -> usize {
        self.records.len()
    }

    pub fn is_empty(&self) -> bool {
        self.records.is_empty()
    }

    /// Covariate label for index `j`, falling back to `x{j+1}`.
    pub fn covariate_name(&self, j: usize) -> String {
        self.column_names
            .as_ref()
            .and_then(|names| names.get(j).cloned())
            .unwrap_or_else(|| format!("x{}", j + 1))
    }

    /// Dataset made of the records at `indices` (repeats allowed).
    pub fn resample(&self, indices: &[usize]) -> Dataset {
        Dataset {
            records: indices.iter().map(|&i| self.records[i].clone()).collect(),
            p: self.p,
            column_names: self.column_names.clone(),
        }
    }

    /// Count of records in each cell of the `{r=1}`, `{r=0,s=1}`, `{r=0,s=0}` partition.
    pub fn phase_counts(&self) -> PhaseCounts {
        let mut c = PhaseCounts::default();
        for rec in &self.records {
            match (rec.r, rec.s) {
                (true, _) => c.observed += 1,
                (false, true) => c.double_sampled += 1,
                (false, false) => c.missing += 1,
            }
        }
        c
    }
}

#[derive(Debug, Clone, Copy, Default, PartialEq, Eq, Serialize, Deserialize)]
pub struct PhaseCounts {
    pub observed: usize,
    pub double_sampled: usize,
    pub missing: usize,
}

#[derive(Debug, Clone, PartialEq, Eq, Serialize, Deserialize)]
pub struct Violation {
    /// Zero-based record index, `None` for dataset-level problems.
    pub record: Option<usize>,
    pub message: String,
}

#[derive(Debug, Clone, Default, PartialEq, Eq, Serialize, Deserialize)]
pub struct ValidationReport {
    pub violations: Vec<Violation>,
}

impl ValidationReport {
    pub fn is_valid(&self) -> bool {
        self.violations.is_empty()
    }

    pub fn summary(&self) -> String {
        let shown: Vec<String> = self
            .violations
            .iter()
            .take(5)
            .map(|v| match v.record {
                Some(i) => format!("record {i}: {}", v.message),
                None => v.message.clone(),
            })
            .collect();
        let mut out = shown.join("; ");
        if self.violations.len() > 5 {
            out.push_str(&format!(" (+{} more)", self.violations.len() - 5));
        }
        out
    }
}

/// Lists every violation of the record and dataset invariants, in record order.
pub fn validate_dataset(d: &Dataset) -> ValidationReport {
    let mut violations = Vec::new();
    let mut push = |record: Option<usize>, message: &str| {
        violations.push(Violation { record, message: message.to_string() });
    };

    if d.records.is_empty() {
        push(None, "dataset is empty");
    }
    let mut arm_has_outcome = [false; 2];
    for (i, rec) in d.records.iter().enumerate() {
        if rec.r && rec.s {
            push(Some(i), "S=1 requires R=0");
        }
        let expected = rec.outcome_expected();
        match (expected, rec.y) {
            (false, Some(_)) => push(Some(i), "y must be absent when R=0 and S=0"),
            (true, None) => push(Some(i), "y must be present when R+S=1"),
            (true, Some(y)) if !y.is_finite() => push(Some(i), "y must be finite"),
            (true, Some(_)) => arm_has_outcome[rec.z as usize] = true,
            _ => {}
        }
        if rec.x.len() != d.p {
            push(
                Some(i),
                &format!("covariate dimension {} does not match p={}", rec.x.len(), d.p),
            );
        } else if rec.x.iter().any(|v| !v.is_finite()) {
            push(Some(i), "covariates must be finite");
        }
    }
    if !d.records.is_empty() {
        for (arm, present) in arm_has_outcome.iter().enumerate() {
            if !present {
                push(None, &format!("treatment arm z={arm} has no observed outcomes"));
            }
        }
    }
    ValidationReport { violations }
}

/// Strictly increasing quantile levels inside `(0, 1)`.
#[derive(Debug, Clone, PartialEq, Serialize, Deserialize)]
#[serde(try_from = "Vec<f64>", into = "Vec<f64>")]
pub struct QuantileGrid {
    taus: Vec<f64>,
}

impl QuantileGrid {
    pub fn new(taus: Vec<f64>) -> Result<Self> {
        if taus.is_empty() {
            return Err(Error::InvalidGrid("grid is empty".into()));
        }
        for &t in &taus {
            if !(t > 0.0 && t < 1.0) {
                return Err(Error::InvalidGrid(format!("level {t} is outside (0, 1)")));
            }
        }
        if let Some(w) = taus.windows(2).find(|w| w[1] <= w[0]) {
            return Err(Error::InvalidGrid(format!(
                "levels must be strictly increasing ({} then {})",
                w[0], w[1]
            )));
        }
        Ok(Self { taus })
    }

    /// `start, start+step, ...` up to and including `stop` (within rounding).
    pub fn range(start: f64, stop: f64, step: f64) -> Result<Self> {
        if !(step > 0.0) || !(stop >= start) {
            return Err(Error::InvalidGrid(format!("bad range {start}:{stop}:{step}")));
        }
        let count = ((stop - start) / step + 1e-9).floor() as usize + 1;
        let taus = (0..count)
            .map(|k| ((start + k as f64 * step) * 1e10).round() / 1e10)
            .collect();
        Self::new(taus)
    }

    pub fn taus(&self) -> &[f64] {
        &self.taus
    }

    pub fn len(&self) -> usize {
        self.taus.len()
    }

    pub fn is_empty(&self) -> bool {
        self.taus.is_empty()
    }

    pub fn position(&self, tau: f64) -> Option<usize> {
        self.taus.iter().position(|&t| (t - tau).abs() < 1e-12)
    }
}

impl Default for QuantileGrid {
    /// 0.1, 0.2, ..., 0.9.
    fn default() -> Self {
        Self::range(0.1, 0.9, 0.1).expect("default grid is valid")
    }
}

impl TryFrom<Vec<f64>> for QuantileGrid {
    type Error = Error;
    fn try_from(v: Vec<f64>) -> Result<Self> {
        Self::new(v)
    }
}

impl From<QuantileGrid> for Vec<f64> {
    fn from(g: QuantileGrid) -> Self {
        g.taus
    }
}

/// Target-population weighting function `g`.
#[derive(Debug, Clone, Copy, PartialEq, Eq, Default, Serialize, Deserialize)]
#[serde(rename_all = "lowercase")]
pub enum GSpec {
    /// `g(x) = 1`: the population QTE.
    #[default]
    Population,
    /// `g(x) = e(x)`: the QTE among the treated.
    Treated,
}

impl GSpec {
    /// `g` evaluated given the propensity score at the same covariates.
    pub fn value(self, e: f64) -> f64 {
        match self {
            GSpec::Population => 1.0,
            GSpec::Treated => e,
        }
    }

    /// `dg/de`.
    pub fn derivative(self) -> f64 {
        match self {
            GSpec::Population => 0.0,
            GSpec::Treated => 1.0,
        }
    }
}

impl fmt::Display for GSpec {
    fn fmt(&self, f: &mut fmt::Formatter<'_>) -> fmt::Result {
        f.write_str(match self {
            GSpec::Population => "population",
            GSpec::Treated => "treated",
        })
    }
}

impl FromStr for GSpec {
    type Err = Error;
    fn from_str(s: &str) -> Result<Self> {
        match s.to_ascii_lowercase().as_str() {
            "population" | "pop" => Ok(GSpec::Population),
            "treated" | "att" => Ok(GSpec::Treated),
            other => Err(Error::Configuration(format!("unknown g `{other}`"))),
        }
    }
}

/// The five estimators compared in the simulation study.
#[derive(Debug, Clone, Copy, PartialEq, Eq, Hash, PartialOrd, Ord, Serialize, Deserialize)]
pub enum EstimatorVariant {
    /// I: full data, fitted propensity.
    #[serde(rename = "I")]
    Full,
    /// II: initially observed outcomes only, fitted propensity.
    #[serde(rename = "II")]
    CompleteCase,
    /// III: observed plus double-sampled outcomes, known propensity.
    #[serde(rename = "III")]
    DoubleSamplingKnownE,
    /// IV: observed plus double-sampled outcomes, fitted propensity.
    #[serde(rename = "IV")]
    DoubleSamplingEstimated,
    /// V: observed outcomes weighted by a MAR observance model.
    #[serde(rename = "V")]
    Mar,
}

impl EstimatorVariant {
    pub const ALL: [EstimatorVariant; 5] = [
        EstimatorVariant::Full,
        EstimatorVariant::CompleteCase,
        EstimatorVariant::DoubleSamplingKnownE,
        EstimatorVariant::DoubleSamplingEstimated,
        EstimatorVariant::Mar,
    ];

    pub fn tag(self) -> &'static str {
        match self {
            EstimatorVariant::Full => "I",
            EstimatorVariant::CompleteCase => "II",
            EstimatorVariant::DoubleSamplingKnownE => "III",
            EstimatorVariant::DoubleSamplingEstimated => "IV",
            EstimatorVariant::Mar => "V",
        }
    }

    pub fn uses_double_sampling(self) -> bool {
        matches!(
            self,
            EstimatorVariant::DoubleSamplingKnownE | EstimatorVariant::DoubleSamplingEstimated
        )
    }

    pub fn propensity_known(self) -> bool {
        self == EstimatorVariant::DoubleSamplingKnownE
    }
}

impl fmt::Display for EstimatorVariant {
    fn fmt(&self, f: &mut fmt::Formatter<'_>) -> fmt::Result {
        f.write_str(self.tag())
    }
}

impl FromStr for EstimatorVariant {
    type Err = Error;
    fn from_str(s: &str) -> Result<Self> {
        match s.to_ascii_uppercase().as_str() {
            "I" | "I-FULL" | "FULL" => Ok(EstimatorVariant::Full),
            "II" | "II-COMPLETE-CASE" | "COMPLETE-CASE" => Ok(EstimatorVariant::CompleteCase),
            "III" | "III-DS-KNOWN-E" => Ok(EstimatorVariant::DoubleSamplingKnownE),
            "IV" | "IV-DS-ESTIMATED" => Ok(EstimatorVariant::DoubleSamplingEstimated),
            "V" | "V-MAR" | "MAR" => Ok(EstimatorVariant::Mar),
            other => Err(Error::Configuration(format!("unknown estimator variant `{other}`"))),
        }
    }
}
