//! Nonparametric pairs bootstrap: resample records, refit everything.

use rand::Rng as _;
use rayon::prelude::*;
use serde::{Deserialize, Serialize};

use crate::data::{Dataset, EstimatorVariant, GSpec, QuantileGrid};
use crate::error::{Error, Result};
use crate::estimator::{fit_wqte, NuisanceConfig};
use crate::rng::{domain, substream, Rng};

#[derive(Debug, Clone, Copy, PartialEq, Serialize, Deserialize)]
pub struct BootstrapOptions {
    pub replicates: usize,
    pub seed: u64,
}

impl BootstrapOptions {
    pub fn new(replicates: usize, seed: u64) -> Self {
        Self { replicates, seed }
    }

    /// Total redraw budget across all replicates.
    pub fn redraw_cap(&self) -> usize {
        100 * self.replicates
    }

    pub(crate) fn check(&self) -> Result<()> {
        if self.replicates < 2 {
            return Err(Error::InvalidParameter(format!(
                "need at least 2 bootstrap replicates, got {}",
                self.replicates
            )));
        }
        Ok(())
    }
}

/// Replicate estimates, one row per replicate and one column per level.
#[derive(Debug, Clone, PartialEq, Serialize, Deserialize)]
pub struct ReplicateMatrix {
    pub grid: QuantileGrid,
    pub beta0: Vec<Vec<f64>>,
    pub beta: Vec<Vec<f64>>,
    /// Degenerate draws that were discarded and redrawn.
    pub redraws: usize,
    pub seed: u64,
}

impl ReplicateMatrix {
    pub fn replicates(&self) -> usize {
        self.beta.len()
    }

    /// Replicate values of `beta` at grid position `k`.
    pub fn column(&self, k: usize) -> Vec<f64> {
        self.beta.iter().map(|row| row[k]).collect()
    }

    /// Sample standard deviation of `beta` at each level.
    pub fn sd(&self) -> Vec<f64> {
        (0..self.grid.len()).map(|k| sample_sd(&self.column(k))).collect()
    }
}

pub fn sample_sd(xs: &[f64]) -> f64 {
    let n = xs.len() as f64;
    let mean = xs.iter().sum::<f64>() / n;
    (xs.iter().map(|x| (x - mean).powi(2)).sum::<f64>() / (n - 1.0)).sqrt()
}

/// Linear-interpolation sample quantile (type 7).
pub fn sample_quantile(xs: &[f64], p: f64) -> f64 {
    let mut v = xs.to_vec();
    v.sort_by(f64::total_cmp);
    let h = (v.len() - 1) as f64 * p;
    let lo = h.floor() as usize;
    let hi = h.ceil() as usize;
    v[lo] + (h - lo as f64) * (v[hi] - v[lo])
}

pub(crate) fn draw_indices(rng: &mut Rng, n: usize) -> Vec<usize> {
    (0..n).map(|_| rng.gen_range(0..n)).collect()
}

/// Runs `attempt` on fresh draws from the replicate's stream until it succeeds,
/// redrawing on degenerate samples up to `cap` times.
pub(crate) fn with_redraws<T>(
    mut rng: Rng,
    cap: usize,
    mut attempt: impl FnMut(&mut Rng) -> Result<T>,
) -> Result<(T, usize)> {
    let mut redraws = 0;
    loop {
        match attempt(&mut rng) {
            Ok(v) => return Ok((v, redraws)),
            Err(e) if e.is_degenerate_sample() => {
                redraws += 1;
                if redraws > cap {
                    return Err(Error::DegenerateResample { redraws, cap });
                }
            }
            Err(e) => return Err(e),
        }
    }
}

pub(crate) fn collect_replicates(
    grid: &QuantileGrid,
    opts: &BootstrapOptions,
    results: Vec<Result<((Vec<f64>, Vec<f64>), usize)>>,
) -> Result<ReplicateMatrix> {
    let cap = opts.redraw_cap();
    let mut beta0 = Vec::with_capacity(results.len());
    let mut beta = Vec::with_capacity(results.len());
    let mut redraws = 0;
    for r in results {
        let ((b0, b), k) = r?;
        redraws += k;
        beta0.push(b0);
        beta.push(b);
    }
    if redraws > cap {
        return Err(Error::DegenerateResample { redraws, cap });
    }
    Ok(ReplicateMatrix { grid: grid.clone(), beta0, beta, redraws, seed: opts.seed })
}

/// Refits nuisances and the estimator on `B` with-replacement resamples.
pub fn pairs_bootstrap(
    d: &Dataset,
    variant: EstimatorVariant,
    g: GSpec,
    cfg: &NuisanceConfig,
    grid: &QuantileGrid,
    opts: &BootstrapOptions,
) -> Result<ReplicateMatrix> {
    opts.check()?;
    let cap = opts.redraw_cap();
    let results: Vec<_> = (0..opts.replicates)
        .into_par_iter()
        .map(|b| {
            let rng = substream(opts.seed, domain::PAIRS, b as u64);
            with_redraws(rng, cap, |rng| {
                let idx = draw_indices(rng, d.len());
                let db = d.resample(&idx);
                let (fit, _) = fit_wqte(&db, variant, g, cfg, grid)?;
                Ok((fit.beta0, fit.beta))
            })
        })
        .collect();
    collect_replicates(grid, opts, results)
}

#[cfg(test)]
mod tests {
    use super::*;

    #[test]
    fn quantile_and_sd_helpers() {
        let xs = [4.0, 1.0, 3.0, 2.0];
        assert_eq!(sample_quantile(&xs, 0.0), 1.0);
        assert_eq!(sample_quantile(&xs, 1.0), 4.0);
        assert_eq!(sample_quantile(&xs, 0.5), 2.5);
        assert!((sample_sd(&xs) - (5.0f64 / 3.0).sqrt()).abs() < 1e-15);
    }

    #[test]
    fn too_few_replicates() {
        assert!(BootstrapOptions::new(1, 0).check().is_err());
    }
}
