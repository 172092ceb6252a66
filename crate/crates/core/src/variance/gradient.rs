//! Gradient bootstrap: perturb the estimating equations with uniform
//! multipliers instead of re-solving on resampled data.
//!
//! Each replicate refits the nuisance models on a with-replacement resample,
//! rebuilds the weights on the original records, and solves the tilted problem
//! `cum_omega(theta_z) >= tau T_z + sum_{arm z} omega_i xi_i` with
//! `xi_i = tau - 1{U_i <= tau}`. Tilting is linear, so each replicate is two
//! weighted quantiles per level over outcomes sorted once up front.

use rand::Rng as _;
use rayon::prelude::*;

use super::pairs::{collect_replicates, draw_indices, with_redraws, BootstrapOptions, ReplicateMatrix};
use crate::data::Dataset;
use crate::error::{Error, Result};
use crate::estimator::{compute_weights, fit_nuisances, NuisanceConfig, SortedValues, WqteFit};
use crate::rng::{domain, substream};

/// Solves tilted problems over the arms of a fitted estimator.
#[derive(Debug, Clone)]
pub struct TiltSolver<'a> {
    fit: &'a WqteFit,
    sorted: [SortedValues; 2],
}

impl<'a> TiltSolver<'a> {
    pub fn new(fit: &'a WqteFit) -> Self {
        let sorted = [SortedValues::new(&fit.arms[0].y), SortedValues::new(&fit.arms[1].y)];
        Self { fit, sorted }
    }

    /// Returns `(beta0, beta)` per level for record weights `omega` (indexed
    /// like the dataset) and tilts `xi(k, i)` at level `k` for record `i`.
    ///
    /// `omega` must be positive exactly on the records the fit used.
    pub fn solve(&self, omega: &[f64], xi: impl Fn(usize, usize) -> f64) -> Result<(Vec<f64>, Vec<f64>)> {
        if omega.len() != self.fit.n {
            return Err(Error::InvalidParameter("tilt weights do not match the dataset".into()));
        }
        let arm_w: Vec<Vec<f64>> = self
            .fit
            .arms
            .iter()
            .map(|arm| arm.index.iter().map(|&i| omega[i]).collect())
            .collect();
        if arm_w.iter().flatten().any(|&w| !(w > 0.0 && w.is_finite())) {
            return Err(Error::InvalidParameter(
                "tilt weights must stay positive on the fitted records".into(),
            ));
        }
        let cums = [self.sorted[0].cumulative(&arm_w[0]), self.sorted[1].cumulative(&arm_w[1])];
        let totals = [*cums[0].last().unwrap(), *cums[1].last().unwrap()];

        let kk = self.fit.grid.len();
        let mut beta0 = Vec::with_capacity(kk);
        let mut beta = Vec::with_capacity(kk);
        for (k, &tau) in self.fit.grid.taus().iter().enumerate() {
            let mut theta = [0.0; 2];
            for z in 0..2 {
                let arm = &self.fit.arms[z];
                let c: f64 = arm.index.iter().zip(&arm_w[z]).map(|(&i, &w)| w * xi(k, i)).sum();
                let target = tau * totals[z] + c;
                if !(target > 0.0 && target < totals[z]) {
                    return Err(Error::TiltOutOfRange { tau, arm: z as u8 });
                }
                theta[z] = self.sorted[z].quantile_at(&cums[z], target);
            }
            beta0.push(theta[0]);
            beta.push(theta[1] - theta[0]);
        }
        Ok((beta0, beta))
    }
}

/// `xi = tau - 1{u <= tau}`.
pub fn multiplier(u: f64, tau: f64) -> f64 {
    tau - f64::from(u8::from(u <= tau))
}

/// Gradient-bootstrap replicates of a fitted estimator.
///
/// `d` must be the dataset `fit` was computed from; the nuisance models are
/// those of `fit.variant` as configured by `cfg`.
pub fn gradient_bootstrap(
    d: &Dataset,
    fit: &WqteFit,
    cfg: &NuisanceConfig,
    opts: &BootstrapOptions,
) -> Result<ReplicateMatrix> {
    opts.check()?;
    if d.len() != fit.n {
        return Err(Error::InvalidParameter("fit does not belong to this dataset".into()));
    }
    let solver = TiltSolver::new(fit);
    let taus = fit.grid.taus();
    let cap = opts.redraw_cap();
    let n = d.len();
    let results: Vec<_> = (0..opts.replicates)
        .into_par_iter()
        .map(|b| {
            let rng = substream(opts.seed, domain::GRADIENT, b as u64);
            with_redraws(rng, cap, |rng| {
                let idx = draw_indices(rng, n);
                let nuisances = fit_nuisances(&d.resample(&idx), fit.variant, cfg)?;
                let weights = compute_weights(d, fit.variant, fit.g, &nuisances)?;
                let u: Vec<f64> = (0..n).map(|_| rng.gen::<f64>()).collect();
                solver.solve(&weights.omega, |k, i| multiplier(u[i], taus[k]))
            })
        })
        .collect();
    collect_replicates(&fit.grid, opts, results)
}

#[cfg(test)]
mod tests {
    use super::*;
    use crate::data::{EstimatorVariant, GSpec, ObservedRecord, QuantileGrid};
    use crate::estimator::{estimate_with_weights, UnitWeights};
    use crate::rng::substream;

    #[test]
    fn zero_tilt_reproduces_point_estimate() {
        let recs: Vec<ObservedRecord> = (0..101)
            .map(|i| ObservedRecord::observed(((i * 29) % 101) as f64 * 0.1, i % 3 == 0, vec![]))
            .collect();
        let omega: Vec<f64> = (0..101).map(|i| 0.5 + (i % 7) as f64 * 0.3).collect();
        let d = Dataset::new(recs, 0);
        let w = UnitWeights { omega: omega.clone(), components: vec![] };
        let fit =
            estimate_with_weights(&d, EstimatorVariant::Full, GSpec::Population, w, &QuantileGrid::default())
                .unwrap();
        let (b0, b) = TiltSolver::new(&fit).solve(&omega, |_, _| 0.0).unwrap();
        assert_eq!(b0, fit.beta0);
        assert_eq!(b, fit.beta);
    }

    #[test]
    fn multiplier_moments() {
        let mut rng = substream(11, 0, 0);
        let m = 200_000;
        for tau in [0.1, 0.5, 0.9] {
            let xs: Vec<f64> = (0..m).map(|_| multiplier(rng.gen(), tau)).collect();
            let mean = xs.iter().sum::<f64>() / m as f64;
            let var = xs.iter().map(|x| (x - mean).powi(2)).sum::<f64>() / m as f64;
            // Five standard errors of the Monte Carlo mean and variance.
            let sd = (tau * (1.0 - tau)).sqrt();
            assert!(mean.abs() < 5.0 * sd / (m as f64).sqrt());
            assert!((var - tau * (1.0 - tau)).abs() < 5.0 * sd / (m as f64).sqrt());
        }
    }
}
