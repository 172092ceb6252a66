//! Weighted kernel estimates of `D_z(tau)`, the g-weighted conditional
//! outcome density of arm `z` at its fitted quantile.

use serde::{Deserialize, Serialize};

use crate::error::{Error, Result};
use crate::estimator::{weighted_quantile, ArmSample, WqteFit};

/// Arms with fewer effective observations than this get a warning.
pub const MIN_EFFECTIVE_N: f64 = 10.0;

#[derive(Debug, Clone, Copy, PartialEq, Serialize, Deserialize)]
#[serde(rename_all = "lowercase")]
pub enum Bandwidth {
    Fixed(f64),
    /// `0.9 min(sd, IQR / 1.34) n_eff^(-1/5)` on the weighted arm sample.
    Silverman,
}

#[derive(Debug, Clone, PartialEq, Serialize, Deserialize)]
pub struct DensityEstimates {
    pub d0: Vec<f64>,
    pub d1: Vec<f64>,
    pub bandwidth: [f64; 2],
    /// Kish effective sample size `(sum w)^2 / sum w^2` per arm.
    pub effective_n: [f64; 2],
    pub warnings: Vec<String>,
}

impl DensityEstimates {
    pub fn arm(&self, z: usize) -> &[f64] {
        if z == 0 {
            &self.d0
        } else {
            &self.d1
        }
    }
}

pub fn effective_n(weights: &[f64]) -> f64 {
    let s: f64 = weights.iter().sum();
    let s2: f64 = weights.iter().map(|w| w * w).sum();
    s * s / s2
}

fn silverman(arm: &ArmSample) -> Result<f64> {
    let total = arm.total();
    let mean = arm.y.iter().zip(&arm.omega).map(|(y, w)| y * w).sum::<f64>() / total;
    let var = arm.y.iter().zip(&arm.omega).map(|(y, w)| w * (y - mean).powi(2)).sum::<f64>() / total;
    let sd = var.sqrt();
    let iqr = weighted_quantile(&arm.y, &arm.omega, 0.75 * total)?
        - weighted_quantile(&arm.y, &arm.omega, 0.25 * total)?;
    let spread = if iqr > 0.0 { sd.min(iqr / 1.34) } else { sd };
    if !(spread > 0.0) {
        return Err(Error::InvalidParameter(
            "arm outcomes have zero spread; supply a fixed bandwidth".into(),
        ));
    }
    Ok(0.9 * spread * effective_n(&arm.omega).powf(-0.2))
}

fn gaussian(u: f64) -> f64 {
    (-0.5 * u * u).exp() / (2.0 * std::f64::consts::PI).sqrt()
}

/// `(1/n) sum_{i in arm} omega_i K_h(y_i - q)`.
pub fn kernel_density(arm: &ArmSample, n: usize, h: f64, at: f64) -> f64 {
    arm.y
        .iter()
        .zip(&arm.omega)
        .map(|(&y, &w)| w * gaussian((y - at) / h))
        .sum::<f64>()
        / (h * n as f64)
}

/// Gaussian-kernel estimates of `D_0` and `D_1` at each fitted quantile,
/// normalized by the full sample size (including unweighted records).
pub fn estimate_densities(fit: &WqteFit, bandwidth: Bandwidth) -> Result<DensityEstimates> {
    let mut bw = [0.0; 2];
    let mut neff = [0.0; 2];
    let mut warnings = Vec::new();
    for z in 0..2 {
        let arm = &fit.arms[z];
        neff[z] = effective_n(&arm.omega);
        if neff[z] < MIN_EFFECTIVE_N {
            warnings.push(format!(
                "unstable density: arm z={z} has {:.1} effective observations",
                neff[z]
            ));
        }
        bw[z] = match bandwidth {
            Bandwidth::Fixed(h) if h.is_finite() && h > 0.0 => h,
            Bandwidth::Fixed(h) => {
                return Err(Error::InvalidParameter(format!("bandwidth must be positive, got {h}")))
            }
            Bandwidth::Silverman => silverman(arm)?,
        };
    }
    let mut d = [Vec::with_capacity(fit.grid.len()), Vec::with_capacity(fit.grid.len())];
    for k in 0..fit.grid.len() {
        for z in 0..2 {
            d[z].push(kernel_density(&fit.arms[z], fit.n, bw[z], fit.arm_quantile(z, k)));
        }
    }
    let [d0, d1] = d;
    Ok(DensityEstimates { d0, d1, bandwidth: bw, effective_n: neff, warnings })
}

#[cfg(test)]
mod tests {
    use super::*;
    use crate::data::{Dataset, EstimatorVariant, GSpec, ObservedRecord, QuantileGrid};
    use crate::estimator::{estimate_with_weights, UnitWeights};

    fn fit_from(ys0: &[f64], ys1: &[f64], grid: &QuantileGrid) -> WqteFit {
        let recs: Vec<ObservedRecord> = ys0
            .iter()
            .map(|&y| ObservedRecord::observed(y, false, vec![]))
            .chain(ys1.iter().map(|&y| ObservedRecord::observed(y, true, vec![])))
            .collect();
        let n = recs.len();
        let d = Dataset::new(recs, 0);
        let w = UnitWeights { omega: vec![1.0; n], components: vec![] };
        estimate_with_weights(&d, EstimatorVariant::Full, GSpec::Population, w, grid).unwrap()
    }

    #[test]
    fn uniform_arm_density_is_arm_share() {
        // Evenly spaced points on (0,1): arm 0 holds 3/5 of the sample.
        let ys0: Vec<f64> = (0..30_000).map(|i| (i as f64 + 0.5) / 30_000.0).collect();
        let ys1: Vec<f64> = (0..20_000).map(|i| (i as f64 + 0.5) / 20_000.0).collect();
        let grid = QuantileGrid::new(vec![0.3, 0.5, 0.7]).unwrap();
        let dens = estimate_densities(&fit_from(&ys0, &ys1, &grid), Bandwidth::Silverman).unwrap();
        for k in 0..3 {
            assert!((dens.d0[k] - 0.6).abs() < 0.01, "{}", dens.d0[k]);
            assert!((dens.d1[k] - 0.4).abs() < 0.01, "{}", dens.d1[k]);
        }
        assert!(dens.warnings.is_empty());
    }

    #[test]
    fn rescaling_outcomes_halves_density() {
        let ys0: Vec<f64> = (0..500).map(|i| ((i * 37) % 101) as f64 / 7.0).collect();
        let ys1: Vec<f64> = (0..400).map(|i| 3.0 + ((i * 53) % 97) as f64 / 5.0).collect();
        let grid = QuantileGrid::default();
        let a = estimate_densities(&fit_from(&ys0, &ys1, &grid), Bandwidth::Silverman).unwrap();
        let s0: Vec<f64> = ys0.iter().map(|y| 2.0 * y).collect();
        let s1: Vec<f64> = ys1.iter().map(|y| 2.0 * y).collect();
        let b = estimate_densities(&fit_from(&s0, &s1, &grid), Bandwidth::Silverman).unwrap();
        for k in 0..grid.len() {
            assert!((b.d0[k] - a.d0[k] / 2.0).abs() < 1e-12 * a.d0[k]);
            assert!((b.d1[k] - a.d1[k] / 2.0).abs() < 1e-12 * a.d1[k]);
        }
    }

    #[test]
    fn bad_bandwidth_and_small_arm() {
        let grid = QuantileGrid::new(vec![0.5]).unwrap();
        let fit = fit_from(&[1.0, 2.0, 3.0], &[1.0, 2.0, 4.0, 5.0], &grid);
        assert!(estimate_densities(&fit, Bandwidth::Fixed(0.0)).is_err());
        let dens = estimate_densities(&fit, Bandwidth::Fixed(1.0)).unwrap();
        assert_eq!(dens.warnings.len(), 2);
    }
}
