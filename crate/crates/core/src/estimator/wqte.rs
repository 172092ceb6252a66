//! Point estimation of the weighted quantile treatment effect.
//!
//! For a binary treatment the weighted check-loss problem in `(beta0, beta)`
//! separates after reparameterizing to `theta0 = beta0` and
//! `theta1 = beta0 + beta`: each `theta_z` is the omega-weighted
//! `tau`-quantile of the observed outcomes in arm `z`. Solving it this way is
//! exact, so the estimating equation is satisfied up to the subgradient gap of
//! a single (tie-pooled) observation.

use serde::{Deserialize, Serialize};

use super::quantile::SortedValues;
use super::weights::{compute_weights, Nuisances, ObservanceModel, Propensity, UnitWeights};
use crate::data::{Dataset, EstimatorVariant, GSpec, QuantileGrid};
use crate::error::{Error, Result};
use crate::models::{
    fit_double_sampling, fit_mar_observance, fit_propensity, DesignSpec, EtaDesign, IrlsOptions,
    KnownPropensity,
};

/// Outcomes and weights of the positively weighted records in one arm.
#[derive(Debug, Clone, Default, PartialEq, Serialize, Deserialize)]
pub struct ArmSample {
    /// Record index in the source dataset.
    pub index: Vec<usize>,
    pub y: Vec<f64>,
    pub omega: Vec<f64>,
}

impl ArmSample {
    pub fn total(&self) -> f64 {
        self.omega.iter().sum()
    }

    pub fn len(&self) -> usize {
        self.y.len()
    }

    pub fn is_empty(&self) -> bool {
        self.y.is_empty()
    }
}

#[derive(Debug, Clone, PartialEq, Serialize, Deserialize)]
pub struct WqteFit {
    pub grid: QuantileGrid,
    pub variant: EstimatorVariant,
    pub g: GSpec,
    /// `Q_{Y(0)}(tau)`.
    pub beta0: Vec<f64>,
    /// `Q_{Y(1)}(tau)`.
    pub beta1: Vec<f64>,
    /// `Q_{Y(1)}(tau) - Q_{Y(0)}(tau)`.
    pub beta: Vec<f64>,
    /// Per-arm estimating-function values at the solution, normalized by total omega.
    pub residuals: Vec<[f64; 2]>,
    pub weights: UnitWeights,
    /// Number of records in the dataset, including zero-weight ones.
    pub n: usize,
    pub arms: [ArmSample; 2],
}

impl WqteFit {
    pub fn total_omega(&self) -> f64 {
        self.arms[0].total() + self.arms[1].total()
    }


    /// Fitted quantile of arm `z` at grid position `k`.
    pub fn arm_quantile(&self, z: usize, k: usize) -> f64 {
        if z == 0 {
            self.beta0[k]
        } else {
            self.beta1[k]
        }
    }

    /// Upper bound on `|residual|` per arm: largest pooled weight over total omega.
    pub fn residual_bound(&self) -> [f64; 2] {
        let total = self.total_omega();
        let bound = |arm: &ArmSample| SortedValues::new(&arm.y).max_group_weight(&arm.omega) / total;
        [bound(&self.arms[0]), bound(&self.arms[1])]
    }
}

/// Splits positively weighted records into arms.
pub fn arm_samples(d: &Dataset, omega: &[f64]) -> Result<[ArmSample; 2]> {
    let mut arms: [ArmSample; 2] = Default::default();
    for (i, (rec, &w)) in d.records.iter().zip(omega).enumerate() {
        if w <= 0.0 {
            continue;
        }
        let y = rec.y.ok_or_else(|| {
            Error::InvalidDataset(format!("record {i} has positive weight but no outcome"))
        })?;
        let arm = &mut arms[usize::from(rec.z)];
        arm.index.push(i);
        arm.y.push(y);
        arm.omega.push(w);
    }
    for (z, arm) in arms.iter().enumerate() {
        if arm.is_empty() {
            return Err(Error::EmptyArm { arm: z as u8 });
        }
    }
    Ok(arms)
}

fn arm_residual(arm: &ArmSample, theta: f64, tau: f64, total: f64) -> f64 {
    arm.y
        .iter()
        .zip(&arm.omega)
        .map(|(&y, &w)| w * (f64::from(u8::from(y < theta)) - tau))
        .sum::<f64>()
        / total
}

/// Solves the weighted estimating equations for every level given fixed weights.
pub fn estimate_with_weights(
    d: &Dataset,
    variant: EstimatorVariant,
    g: GSpec,
    weights: UnitWeights,
    grid: &QuantileGrid,
) -> Result<WqteFit> {
    if weights.omega.len() != d.len() {
        return Err(Error::InvalidParameter("weights do not match dataset".into()));
    }
    let arms = arm_samples(d, &weights.omega)?;
    let sorted = [SortedValues::new(&arms[0].y), SortedValues::new(&arms[1].y)];
    let cums = [sorted[0].cumulative(&arms[0].omega), sorted[1].cumulative(&arms[1].omega)];
    let totals = [*cums[0].last().unwrap(), *cums[1].last().unwrap()];
    let total = totals[0] + totals[1];

    let mut beta0 = Vec::with_capacity(grid.len());
    let mut beta1 = Vec::with_capacity(grid.len());
    let mut beta = Vec::with_capacity(grid.len());
    let mut residuals = Vec::with_capacity(grid.len());
    for &tau in grid.taus() {
        let theta0 = sorted[0].quantile_at(&cums[0], tau * totals[0]);
        let theta1 = sorted[1].quantile_at(&cums[1], tau * totals[1]);
        beta0.push(theta0);
        beta1.push(theta1);
        beta.push(theta1 - theta0);
        residuals.push([
            arm_residual(&arms[0], theta0, tau, total),
            arm_residual(&arms[1], theta1, tau, total),
        ]);
    }
    Ok(WqteFit {
        grid: grid.clone(),
        variant,
        g,
        beta0,
        beta1,
        beta,
        residuals,
        weights,
        n: d.len(),
        arms,
    })
}

/// Computes weights for `variant` from fitted nuisances and solves at every level.
pub fn estimate_wqte(
    d: &Dataset,
    variant: EstimatorVariant,
    g: GSpec,
    nuisances: &Nuisances,
    grid: &QuantileGrid,
) -> Result<WqteFit> {
    let weights = compute_weights(d, variant, g, nuisances)?;
    estimate_with_weights(d, variant, g, weights, grid)
}

/// Estimating-function value (per arm, over total omega) at arbitrary
/// `(beta0, beta)`, using the strict indicator `1{y < theta}`.
pub fn residual_at(fit: &WqteFit, tau: f64, beta0: f64, beta: f64) -> [f64; 2] {
    let total = fit.total_omega();
    [
        arm_residual(&fit.arms[0], beta0, tau, total),
        arm_residual(&fit.arms[1], beta0 + beta, tau, total),
    ]
}

/// Estimating-function value at the fitted solution for a level on the grid.
pub fn estimating_equation_residual(fit: &WqteFit, tau: f64) -> Result<[f64; 2]> {
    let k = fit
        .grid
        .position(tau)
        .ok_or_else(|| Error::InvalidParameter(format!("tau={tau} is not on the fitted grid")))?;
    let total = fit.total_omega();
    Ok([
        arm_residual(&fit.arms[0], fit.beta0[k], tau, total),
        arm_residual(&fit.arms[1], fit.beta1[k], tau, total),
    ])
}

/// How nuisance models are specified and fitted.
#[derive(Debug, Clone)]
pub struct NuisanceConfig {
    pub propensity: DesignSpec,
    pub eta: EtaDesign,
    pub mar: DesignSpec,
    pub irls: IrlsOptions,
    /// Required by variant III.
    pub known_propensity: Option<KnownPropensity>,
}

impl Default for NuisanceConfig {
    fn default() -> Self {
        Self {
            propensity: DesignSpec::covariates_only(),
            eta: EtaDesign::default(),
            mar: DesignSpec::with_treatment(),
            irls: IrlsOptions::default(),
            known_propensity: None,
        }
    }
}

/// Fits the nuisance models `variant` needs.
///
/// For III and IV the double-sampling model is skipped when no record has
/// `r = 0`, since every observance factor is then 1.
pub fn fit_nuisances(d: &Dataset, variant: EstimatorVariant, cfg: &NuisanceConfig) -> Result<Nuisances> {
    let propensity = if variant.propensity_known() {
        Propensity::Known(cfg.known_propensity.clone().ok_or_else(|| {
            Error::Configuration("variant III needs a known propensity function".into())
        })?)
    } else {
        Propensity::Fitted(fit_propensity(d, &cfg.propensity, &cfg.irls)?)
    };
    let observance = match variant {
        EstimatorVariant::DoubleSamplingKnownE | EstimatorVariant::DoubleSamplingEstimated => {
            if d.records.iter().any(|r| !r.r) {
                Some(ObservanceModel::DoubleSampling(fit_double_sampling(d, &cfg.eta, &cfg.irls)?))
            } else {
                None
            }
        }
        EstimatorVariant::Mar => Some(ObservanceModel::Mar(fit_mar_observance(d, &cfg.mar, &cfg.irls)?)),
        EstimatorVariant::Full | EstimatorVariant::CompleteCase => None,
    };
    Ok(Nuisances { propensity, observance })
}

/// Fits nuisances and estimates the WQTE curve in one call.
pub fn fit_wqte(
    d: &Dataset,
    variant: EstimatorVariant,
    g: GSpec,
    cfg: &NuisanceConfig,
    grid: &QuantileGrid,
) -> Result<(WqteFit, Nuisances)> {
    let nuisances = fit_nuisances(d, variant, cfg)?;
    let fit = estimate_wqte(d, variant, g, &nuisances, grid)?;
    Ok((fit, nuisances))
}

#[cfg(test)]
mod tests {
    use super::*;
    use crate::data::ObservedRecord;

    fn unit_fit(ys0: &[f64], ys1: &[f64], grid: &QuantileGrid) -> WqteFit {
        let mut recs = Vec::new();
        for &y in ys0 {
            recs.push(ObservedRecord::observed(y, false, vec![]));
        }
        for &y in ys1 {
            recs.push(ObservedRecord::observed(y, true, vec![]));
        }
        let d = Dataset::new(recs, 0);
        let n = d.len();
        let weights = UnitWeights {
            omega: vec![1.0; n],
            components: vec![
                crate::estimator::WeightComponents {
                    g: 1.0,
                    e: 0.5,
                    observance_probability: None,
                    observance_factor: 1.0,
                    w_g: 1.0
                };
                n
            ],
        };
        estimate_with_weights(&d, EstimatorVariant::Full, GSpec::Population, weights, grid).unwrap()
    }

    #[test]
    fn medians_and_effect() {
        let grid = QuantileGrid::new(vec![0.5]).unwrap();
        let fit = unit_fit(&[1.0, 5.0, 3.0], &[10.0, 12.0, 11.0, 13.0], &grid);
        assert_eq!(fit.beta0, vec![3.0]);
        assert_eq!(fit.beta, vec![11.0 - 3.0]);
    }

    #[test]
    fn distinct_unit_weights_residual_gap() {
        let grid = QuantileGrid::default();
        let ys0: Vec<f64> = (0..37).map(|i| (i as f64 * 0.731).sin()).collect();
        let ys1: Vec<f64> = (0..23).map(|i| 2.0 + (i as f64 * 1.37).cos()).collect();
        let fit = unit_fit(&ys0, &ys1, &grid);
        let n = 60.0;
        for &tau in grid.taus() {
            let r = estimating_equation_residual(&fit, tau).unwrap();
            assert!(r[0].abs() <= 1.0 / n + 1e-15 && r[1].abs() <= 1.0 / n + 1e-15, "{r:?}");
        }
        assert_eq!(fit.residual_bound(), [1.0 / n, 1.0 / n]);
    }

    #[test]
    fn perturbing_beta0_increases_residual() {
        let grid = QuantileGrid::new(vec![0.3, 0.5]).unwrap();
        let ys0: Vec<f64> = (0..200).map(|i| i as f64 / 200.0).collect();
        let ys1: Vec<f64> = (0..150).map(|i| 0.5 + i as f64 / 150.0).collect();
        let fit = unit_fit(&ys0, &ys1, &grid);
        for (k, &tau) in grid.taus().iter().enumerate() {
            let at = residual_at(&fit, tau, fit.beta0[k], fit.beta[k]);
            let off = residual_at(&fit, tau, fit.beta0[k] + 0.1, fit.beta[k]);
            let norm = |r: [f64; 2]| r[0].hypot(r[1]);
            assert!(norm(off) > norm(at));
        }
    }

    #[test]
    fn off_grid_level_is_rejected() {
        let grid = QuantileGrid::new(vec![0.5]).unwrap();
        let fit = unit_fit(&[1.0], &[2.0], &grid);
        assert!(estimating_equation_residual(&fit, 0.25).is_err());
    }

    #[test]
    fn empty_arm() {
        let d = Dataset::new(vec![ObservedRecord::observed(1.0, true, vec![])], 0);
        let w = UnitWeights { omega: vec![1.0], components: vec![] };
        assert!(matches!(
            estimate_with_weights(&d, EstimatorVariant::Full, GSpec::Population, w, &QuantileGrid::default()),
            Err(Error::EmptyArm { arm: 0 })
        ));
    }
}
