//! Shared fixtures for the benchmarks.

use wqte_core::estimator::{fit_wqte, Nuisances, WqteFit};
use wqte_core::simulation::{simulate_datasets, simulation_nuisance_config, strata_sizes, SimScenario};
use wqte_core::{Dataset, EstimatorVariant, GSpec, QuantileGrid};

pub const VARIANT: EstimatorVariant = EstimatorVariant::DoubleSamplingEstimated;

/// Observed data from replicate 0 of the homogeneous scenario at size `n`.
pub fn observed(n: usize) -> Dataset {
    let s = SimScenario { n, seed: 42, ..SimScenario::homogeneous() };
    let sizes = strata_sizes(&s).expect("valid scenario");
    simulate_datasets(&s, &sizes, 0).expect("simulation succeeds").1
}

/// A fitted variant-IV estimator on [`observed`] data.
pub fn fitted(n: usize) -> (Dataset, WqteFit, Nuisances) {
    let d = observed(n);
    let (fit, nuisances) = fit_wqte(&d, VARIANT, GSpec::Population, &simulation_nuisance_config(), &QuantileGrid::default())
        .expect("fit succeeds");
    (d, fit, nuisances)
}
