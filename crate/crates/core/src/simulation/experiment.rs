//! Repeated-sampling experiment over the five estimators.

use std::collections::BTreeMap;

use rayon::prelude::*;
use serde::{Deserialize, Serialize};

use super::dgp::{simulate_datasets, strata_rule, strata_sizes, N_STRATA, PROPENSITY_COEFFICIENTS};
use super::oracle::{oracle_qte, OracleQte};
use super::scenario::SimScenario;
use crate::data::{Dataset, EstimatorVariant};
use crate::error::{Error, Result};
use crate::estimator::{fit_wqte, NuisanceConfig, WqteFit};
use crate::models::{DesignSpec, EtaDesign, IrlsOptions, KnownPropensity};
use crate::rng::{child_seed, domain};
use crate::variance::{
    gradient_bootstrap, gradient_inference, infer_asymptotic, pairs_bootstrap, pairs_inference,
    Bandwidth, BootstrapOptions, InferenceResult,
};

/// Nuisance specification used for every simulated dataset.
pub fn simulation_nuisance_config() -> NuisanceConfig {
    NuisanceConfig {
        propensity: DesignSpec::covariates_only(),
        eta: EtaDesign::Strata { rule: strata_rule(), allow_census: true },
        mar: DesignSpec::with_treatment(),
        irls: IrlsOptions::default(),
        known_propensity: Some(KnownPropensity::logistic(PROPENSITY_COEFFICIENTS.to_vec())),
    }
}

fn bootstrapped(v: EstimatorVariant) -> bool {
    v.uses_double_sampling()
}

/// Everything one variant produced on one simulated dataset.
#[derive(Debug, Clone, PartialEq, Serialize, Deserialize)]
pub struct VariantOutcome {
    pub variant: EstimatorVariant,
    pub beta: Option<Vec<f64>>,
    pub asymptotic: Option<InferenceResult>,
    pub pairs: Option<InferenceResult>,
    pub gradient: Option<InferenceResult>,
    /// `stage/kind` tags of anything that failed.
    pub failures: Vec<String>,
}

#[derive(Debug, Clone, PartialEq, Serialize, Deserialize)]
pub struct ReplicateOutcome {
    pub replicate: u64,
    pub missing_fraction: f64,
    /// Share of `r = 0` records that were double-sampled.
    pub double_sampled_fraction: f64,
    pub shortfall: usize,
    pub variants: Vec<VariantOutcome>,
}

fn tag(stage: &str, e: &Error) -> String {
    format!("{stage}/{}", e.kind())
}

fn run_variant(
    s: &SimScenario,
    cfg: &NuisanceConfig,
    data: &Dataset,
    variant: EstimatorVariant,
    replicate: u64,
) -> VariantOutcome {
    let mut out = VariantOutcome {
        variant,
        beta: None,
        asymptotic: None,
        pairs: None,
        gradient: None,
        failures: Vec::new(),
    };
    let (fit, nuisances): (WqteFit, _) = match fit_wqte(data, variant, s.g, cfg, &s.grid) {
        Ok(v) => v,
        Err(e) => {
            out.failures.push(tag("estimate", &e));
            return out;
        }
    };
    out.beta = Some(fit.beta.clone());
    match infer_asymptotic(data, &fit, &nuisances, Bandwidth::Silverman, s.alpha) {
        Ok((inf, _)) => out.asymptotic = Some(inf),
        Err(e) => out.failures.push(tag("asymptotic", &e)),
    }
    if !bootstrapped(variant) {
        return out;
    }
    let index = replicate * 8 + variant as u64;
    if s.pairs_bootstrap {
        let opts = BootstrapOptions::new(s.bootstrap_replicates, child_seed(s.seed, domain::PAIRS, index));
        match pairs_bootstrap(data, variant, s.g, cfg, &s.grid, &opts)
            .and_then(|reps| pairs_inference(&fit.beta, &reps, s.alpha))
        {
            Ok(inf) => out.pairs = Some(inf),
            Err(e) => out.failures.push(tag("pairs", &e)),
        }
    }
    if s.gradient_bands {
        let opts = BootstrapOptions::new(s.bootstrap_replicates, child_seed(s.seed, domain::GRADIENT, index));
        match gradient_bootstrap(data, &fit, cfg, &opts).and_then(|reps| gradient_inference(&fit.beta, &reps, s.alpha)) {
            Ok(inf) => out.gradient = Some(inf),
            Err(e) => out.failures.push(tag("gradient", &e)),
        }
    }
    out
}

/// Simulates one dataset and runs every estimator on it.
pub fn run_replicate(s: &SimScenario, sizes: &[usize; N_STRATA], replicate: u64) -> Result<ReplicateOutcome> {
    let cfg = simulation_nuisance_config();
    let (complete, data, report) = simulate_datasets(s, sizes, replicate)?;
    let counts = data.phase_counts();
    let unobserved = counts.double_sampled + counts.missing;

    let variants = EstimatorVariant::ALL
        .iter()
        .map(|&v| {
            let d = if v == EstimatorVariant::Full { &complete } else { &data };
            run_variant(s, &cfg, d, v, replicate)
        })
        .collect();
    Ok(ReplicateOutcome {
        replicate,
        missing_fraction: unobserved as f64 / data.len() as f64,
        double_sampled_fraction: if unobserved == 0 { 0.0 } else { counts.double_sampled as f64 / unobserved as f64 },
        shortfall: report.total_shortfall(),
        variants,
    })
}

#[derive(Debug, Clone, PartialEq, Serialize, Deserialize)]
pub struct IntervalSummary {
    /// Replicates that produced intervals.
    pub successes: usize,
    pub mean_se: Vec<f64>,
    pub coverage: Vec<f64>,
}

#[derive(Debug, Clone, PartialEq, Serialize, Deserialize)]
pub struct EstimatorSummary {
    pub variant: EstimatorVariant,
    pub successes: usize,
    pub mean_estimate: Vec<f64>,
    /// `100 (mean estimate - truth) / |truth|`.
    pub relative_bias_pct: Vec<f64>,
    /// Standard deviation of the estimates across replicates.
    pub empirical_se: Vec<f64>,
    pub asymptotic: Option<IntervalSummary>,
    pub pairs: Option<IntervalSummary>,
    pub gradient: Option<IntervalSummary>,
}

#[derive(Debug, Clone, PartialEq, Serialize, Deserialize)]
pub struct BandSummary {
    pub variant: EstimatorVariant,
    pub successes: usize,
    /// Share of bands containing the whole true curve.
    pub coverage: f64,
    pub mean_critical_value: f64,
}

#[derive(Debug, Clone, PartialEq, Serialize, Deserialize)]
pub struct SimReport {
    pub scenario: SimScenario,
    pub strata_sizes: [usize; N_STRATA],
    pub oracle: OracleQte,
    pub replications: usize,
    pub mean_missing_fraction: f64,
    pub mean_double_sampled_fraction: f64,
    pub total_shortfall: usize,
    pub estimators: Vec<EstimatorSummary>,
    pub bands: Vec<BandSummary>,
    /// Failure counts keyed by `variant/stage/kind`.
    pub failures: BTreeMap<String, usize>,
}

impl SimReport {
    pub fn estimator(&self, v: EstimatorVariant) -> Option<&EstimatorSummary> {
        self.estimators.iter().find(|e| e.variant == v)
    }

    pub fn band(&self, v: EstimatorVariant) -> Option<&BandSummary> {
        self.bands.iter().find(|b| b.variant == v)
    }
}

fn mean(xs: impl Iterator<Item = f64>) -> f64 {
    let (s, n) = xs.fold((0.0, 0usize), |(s, n), x| (s + x, n + 1));
    s / n as f64
}

fn summarize_intervals(infs: &[&InferenceResult], truth: &[f64]) -> Option<IntervalSummary> {
    if infs.is_empty() {
        return None;
    }
    let kk = truth.len();
    Some(IntervalSummary {
        successes: infs.len(),
        mean_se: (0..kk).map(|k| mean(infs.iter().map(|i| i.se[k]))).collect(),
        coverage: (0..kk)
            .map(|k| mean(infs.iter().map(|i| f64::from(u8::from(i.ci_covers(k, truth[k]))))))
            .collect(),
    })
}

/// Aggregates replicate outcomes against the oracle, in replicate order.
pub fn summarize(
    s: &SimScenario,
    sizes: [usize; N_STRATA],
    oracle: OracleQte,
    outcomes: &[ReplicateOutcome],
) -> SimReport {
    let truth = &oracle.beta;
    let kk = truth.len();
    let mut failures = BTreeMap::new();
    for o in outcomes {
        for v in &o.variants {
            for f in &v.failures {
                *failures.entry(format!("{}/{f}", v.variant)).or_insert(0) += 1;
            }
        }
    }
    let mut estimators = Vec::new();
    let mut bands = Vec::new();
    for (j, &variant) in EstimatorVariant::ALL.iter().enumerate() {
        let per: Vec<&VariantOutcome> = outcomes.iter().map(|o| &o.variants[j]).collect();
        let betas: Vec<&Vec<f64>> = per.iter().filter_map(|v| v.beta.as_ref()).collect();
        let m = betas.len();
        let mean_estimate: Vec<f64> = (0..kk).map(|k| mean(betas.iter().map(|b| b[k]))).collect();
        let empirical_se = (0..kk)
            .map(|k| {
                let mu = mean_estimate[k];
                (betas.iter().map(|b| (b[k] - mu).powi(2)).sum::<f64>() / (m as f64 - 1.0)).sqrt()
            })
            .collect();
        let relative_bias_pct =
            mean_estimate.iter().zip(truth).map(|(e, t)| 100.0 * (e - t) / t.abs()).collect();
        let collect = |f: fn(&VariantOutcome) -> Option<&InferenceResult>| -> Vec<&InferenceResult> {
            per.iter().filter_map(|v| f(v)).collect()
        };
        let asym = collect(|v| v.asymptotic.as_ref());
        let pairs = collect(|v| v.pairs.as_ref());
        let grad = collect(|v| v.gradient.as_ref());
        if !grad.is_empty() {
            bands.push(BandSummary {
                variant,
                successes: grad.len(),
                coverage: mean(grad.iter().map(|i| f64::from(u8::from(i.band_covers(truth) == Some(true))))),
                mean_critical_value: mean(grad.iter().filter_map(|i| i.critical_value)),
            });
        }
        estimators.push(EstimatorSummary {
            variant,
            successes: m,
            mean_estimate,
            relative_bias_pct,
            empirical_se,
            asymptotic: summarize_intervals(&asym, truth),
            pairs: summarize_intervals(&pairs, truth),
            gradient: summarize_intervals(&grad, truth),
        });
    }
    SimReport {
        scenario: s.clone(),
        strata_sizes: sizes,
        replications: outcomes.len(),
        mean_missing_fraction: mean(outcomes.iter().map(|o| o.missing_fraction)),
        mean_double_sampled_fraction: mean(outcomes.iter().map(|o| o.double_sampled_fraction)),
        total_shortfall: outcomes.iter().map(|o| o.shortfall).sum(),
        oracle,
        estimators,
        bands,
        failures,
    }
}

/// Runs every replication of the scenario and aggregates the results.
///
/// Replications run in parallel; the report is a deterministic function of
/// the scenario alone.
pub fn run_experiment(s: &SimScenario) -> Result<SimReport> {
    let (report, _) = run_experiment_detailed(s)?;
    Ok(report)
}

/// [`run_experiment`] that also returns the per-replicate outcomes.
pub fn run_experiment_detailed(s: &SimScenario) -> Result<(SimReport, Vec<ReplicateOutcome>)> {
    s.validate()?;
    let sizes = strata_sizes(s)?;
    let oracle = oracle_qte(s, &s.grid, s.oracle_draws, s.seed)?;
    let outcomes = (0..s.replications as u64)
        .into_par_iter()
        .map(|r| run_replicate(s, &sizes, r))
        .collect::<Result<Vec<_>>>()?;
    Ok((summarize(s, sizes, oracle, &outcomes), outcomes))
}

#[cfg(test)]
mod tests {
    use super::*;
    use crate::rng::substream;
    use crate::simulation::{double_sample_stratified, generate_complete, impose_missingness};

    fn tiny() -> SimScenario {
        SimScenario {
            n: 600,
            replications: 3,
            bootstrap_replicates: 20,
            oracle_draws: 20_000,
            pairs_bootstrap: true,
            ..SimScenario::homogeneous()
        }
    }

    #[test]
    fn report_is_deterministic_and_complete() {
        let s = tiny();
        let a = run_experiment(&s).unwrap();
        let b = run_experiment(&s).unwrap();
        assert_eq!(serde_json::to_string(&a).unwrap(), serde_json::to_string(&b).unwrap());
        assert_eq!(a.estimators.len(), 5);
        assert_eq!(a.bands.len(), 2);
        for e in &a.estimators {
            for c in e.asymptotic.iter().chain(&e.pairs).flat_map(|i| &i.coverage) {
                assert!((0.0..=1.0).contains(c));
            }
        }
    }

    #[test]
    fn masked_outcomes_do_not_matter() {
        let s = tiny();
        let sizes = strata_sizes(&s).unwrap();
        let complete = generate_complete(&s, 0);
        let masked = impose_missingness(&complete, &s, 0).unwrap();
        let mut scrambled = masked.clone();
        let mut rng_a = substream(9, domain::DOUBLE_SAMPLING, 0);
        let mut rng_b = substream(9, domain::DOUBLE_SAMPLING, 0);
        let (da, _) = double_sample_stratified(&masked, &sizes, &mut rng_a);
        // Replace hidden values of records that stay unsampled.
        for (i, rec) in da.records.iter().enumerate() {
            if !rec.r && !rec.s {
                scrambled.hidden[i] = Some(1e6 + i as f64);
            }
        }
        let (db, _) = double_sample_stratified(&scrambled, &sizes, &mut rng_b);
        let cfg = simulation_nuisance_config();
        for v in EstimatorVariant::ALL.into_iter().skip(1) {
            let (fa, _) = fit_wqte(&da, v, s.g, &cfg, &s.grid).unwrap();
            let (fb, _) = fit_wqte(&db, v, s.g, &cfg, &s.grid).unwrap();
            assert_eq!(fa.beta, fb.beta);
            assert_eq!(fa.beta0, fb.beta0);
        }
    }
}
