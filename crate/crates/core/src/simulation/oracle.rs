//! Monte Carlo ground truth from simulated potential outcomes.

use rand::Rng as _;
use serde::{Deserialize, Serialize};

use super::dgp::{outcome, pareto_error, true_propensity};
use super::scenario::SimScenario;
use crate::data::{GSpec, QuantileGrid};
use crate::error::Result;
use crate::estimator::SortedValues;
use crate::rng::{domain, substream};

#[derive(Debug, Clone, PartialEq, Serialize, Deserialize)]
pub struct OracleQte {
    pub grid: QuantileGrid,
    pub g: GSpec,
    pub draws: usize,
    pub beta0: Vec<f64>,
    pub beta: Vec<f64>,
}

fn weighted_quantiles(values: &[f64], weights: &[f64], grid: &QuantileGrid) -> Vec<f64> {
    let sorted = SortedValues::new(values);
    let cum = sorted.cumulative(weights);
    let total = *cum.last().expect("non-empty");
    grid.taus().iter().map(|&t| sorted.quantile_at(&cum, t * total)).collect()
}

/// g-weighted quantiles of `Y(0)` and `Y(1)` over `draws` simulated units.
///
/// Both potential outcomes of a unit share its covariates and error, so with
/// `rho = 0` the two marginals are exact shifts of each other.
pub fn oracle_qte(s: &SimScenario, grid: &QuantileGrid, draws: usize, seed: u64) -> Result<OracleQte> {
    let g = s.g;
    oracle_with_weight(s, grid, draws, seed, |x| g.value(true_propensity(x)))
}

fn oracle_with_weight(
    s: &SimScenario,
    grid: &QuantileGrid,
    draws: usize,
    seed: u64,
    weight: impl Fn(&[f64]) -> f64,
) -> Result<OracleQte> {
    s.validate()?;
    let mut rng = substream(seed, domain::ORACLE, 0);
    let mut y0 = Vec::with_capacity(draws);
    let mut y1 = Vec::with_capacity(draws);
    let mut w = Vec::with_capacity(draws);
    for _ in 0..draws {
        let x = [rng.gen::<f64>(), 2.0 * rng.gen::<f64>()];
        let eps = pareto_error(s, 1.0 - rng.gen::<f64>());
        y0.push(outcome(s, x, false, eps));
        y1.push(outcome(s, x, true, eps));
        w.push(weight(&x));
    }
    let q0 = weighted_quantiles(&y0, &w, grid);
    let q1 = weighted_quantiles(&y1, &w, grid);
    Ok(OracleQte {
        grid: grid.clone(),
        g: s.g,
        draws,
        beta: q1.iter().zip(&q0).map(|(a, b)| a - b).collect(),
        beta0: q0,
    })
}
