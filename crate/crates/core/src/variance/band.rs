//! Pointwise intervals and sup-statistic uniform bands.

use serde::{Deserialize, Serialize};
use statrs::distribution::{ContinuousCDF, Normal};

use super::pairs::{sample_quantile, ReplicateMatrix};
use crate::data::QuantileGrid;
use crate::error::{Error, Result};

/// Bands from fewer replicates than this carry a warning.
pub const MIN_BAND_REPLICATES: usize = 50;

#[derive(Debug, Clone, Copy, PartialEq, Eq, Serialize, Deserialize)]
#[serde(rename_all = "kebab-case")]
pub enum InferenceMethod {
    Asymptotic,
    PairsBootstrap,
    GradientBootstrap,
}

impl std::fmt::Display for InferenceMethod {
    fn fmt(&self, f: &mut std::fmt::Formatter<'_>) -> std::fmt::Result {
        f.write_str(match self {
            InferenceMethod::Asymptotic => "asymptotic",
            InferenceMethod::PairsBootstrap => "pairs-bootstrap",
            InferenceMethod::GradientBootstrap => "gradient-bootstrap",
        })
    }
}

impl std::str::FromStr for InferenceMethod {
    type Err = Error;

    fn from_str(s: &str) -> Result<Self> {
        match s {
            "asymptotic" => Ok(InferenceMethod::Asymptotic),
            "pairs-bootstrap" | "pairs" => Ok(InferenceMethod::PairsBootstrap),
            "gradient-bootstrap" | "gradient" => Ok(InferenceMethod::GradientBootstrap),
            other => Err(Error::InvalidParameter(format!("unknown inference method `{other}`"))),
        }
    }
}

/// Inference on `beta(tau)` over a grid.
#[derive(Debug, Clone, PartialEq, Serialize, Deserialize)]
pub struct InferenceResult {
    pub grid: QuantileGrid,
    pub method: InferenceMethod,
    pub alpha: f64,
    pub estimate: Vec<f64>,
    pub se: Vec<f64>,
    pub ci_lower: Vec<f64>,
    pub ci_upper: Vec<f64>,
    /// Present for studentized bootstrap bands.
    pub band_lower: Option<Vec<f64>>,
    pub band_upper: Option<Vec<f64>>,
    pub critical_value: Option<f64>,
    pub replicates: usize,
    pub redraws: usize,
    pub seed: Option<u64>,
    pub warnings: Vec<String>,
}

impl InferenceResult {
    /// Whether `beta(tau) = 0 for all tau` is rejected: zero leaves the band
    /// somewhere. `None` without a band.
    pub fn rejects_zero_curve(&self) -> Option<bool> {
        let (lo, hi) = (self.band_lower.as_ref()?, self.band_upper.as_ref()?);
        Some(lo.iter().zip(hi).any(|(&l, &u)| l > 0.0 || u < 0.0))
    }

    /// Whether the band contains `curve` at every level. `None` without a band.
    pub fn band_covers(&self, curve: &[f64]) -> Option<bool> {
        let (lo, hi) = (self.band_lower.as_ref()?, self.band_upper.as_ref()?);
        Some(curve.iter().zip(lo.iter().zip(hi)).all(|(&c, (&l, &u))| l <= c && c <= u))
    }

    pub fn ci_covers(&self, k: usize, value: f64) -> bool {
        self.ci_lower[k] <= value && value <= self.ci_upper[k]
    }
}

pub(crate) fn check_alpha(alpha: f64) -> Result<()> {
    if alpha > 0.0 && alpha < 1.0 {
        Ok(())
    } else {
        Err(Error::InvalidParameter(format!("alpha must lie in (0, 1), got {alpha}")))
    }
}

/// `z_{1 - alpha/2}`.
pub fn normal_critical_value(alpha: f64) -> Result<f64> {
    check_alpha(alpha)?;
    Ok(Normal::standard().inverse_cdf(1.0 - alpha / 2.0))
}

/// Wald intervals `estimate +/- z_{1-alpha/2} se`.
pub fn asymptotic_inference(grid: &QuantileGrid, estimate: &[f64], se: &[f64], alpha: f64) -> Result<InferenceResult> {
    let c = normal_critical_value(alpha)?;
    Ok(InferenceResult {
        grid: grid.clone(),
        method: InferenceMethod::Asymptotic,
        alpha,
        estimate: estimate.to_vec(),
        se: se.to_vec(),
        ci_lower: estimate.iter().zip(se).map(|(b, s)| b - c * s).collect(),
        ci_upper: estimate.iter().zip(se).map(|(b, s)| b + c * s).collect(),
        band_lower: None,
        band_upper: None,
        critical_value: None,
        replicates: 0,
        redraws: 0,
        seed: None,
        warnings: Vec::new(),
    })
}

/// Percentile intervals and replicate standard errors.
pub fn pairs_inference(estimate: &[f64], reps: &ReplicateMatrix, alpha: f64) -> Result<InferenceResult> {
    check_alpha(alpha)?;
    let k = reps.grid.len();
    let cols: Vec<Vec<f64>> = (0..k).map(|j| reps.column(j)).collect();
    Ok(InferenceResult {
        grid: reps.grid.clone(),
        method: InferenceMethod::PairsBootstrap,
        alpha,
        estimate: estimate.to_vec(),
        se: reps.sd(),
        ci_lower: cols.iter().map(|c| sample_quantile(c, alpha / 2.0)).collect(),
        ci_upper: cols.iter().map(|c| sample_quantile(c, 1.0 - alpha / 2.0)).collect(),
        band_lower: None,
        band_upper: None,
        critical_value: None,
        replicates: reps.replicates(),
        redraws: reps.redraws,
        seed: Some(reps.seed),
        warnings: Vec::new(),
    })
}

#[derive(Debug, Clone, PartialEq, Serialize, Deserialize)]
pub struct UniformBand {
    /// Replicate standard deviation per level.
    pub scale: Vec<f64>,
    /// Order statistic of the sup statistic.
    pub critical_value: f64,
    /// The same order statistic taken level by level.
    pub pointwise_critical: Vec<f64>,
    pub lower: Vec<f64>,
    pub upper: Vec<f64>,
    pub warnings: Vec<String>,
}

/// `ceil((1 - alpha) B)`-th smallest value (1-based), clamped to the sample.
fn upper_order_statistic(mut xs: Vec<f64>, alpha: f64) -> f64 {
    xs.sort_by(f64::total_cmp);
    let rank = ((1.0 - alpha) * xs.len() as f64).ceil() as usize;
    xs[rank.clamp(1, xs.len()) - 1]
}

/// Studentized sup-statistic band `estimate +/- c s(tau)`.
pub fn uniform_band(estimate: &[f64], reps: &ReplicateMatrix, alpha: f64) -> Result<UniformBand> {
    check_alpha(alpha)?;
    let kk = reps.grid.len();
    if estimate.len() != kk {
        return Err(Error::InvalidParameter("estimate does not match the replicate grid".into()));
    }
    let scale = reps.sd();
    for (k, &s) in scale.iter().enumerate() {
        if !(s > 0.0 && s.is_finite()) {
            return Err(Error::DegenerateBand { tau: reps.grid.taus()[k] });
        }
    }
    let mut warnings = Vec::new();
    if reps.replicates() < MIN_BAND_REPLICATES {
        warnings.push(format!(
            "uniform band from only {} replicates; at least {MIN_BAND_REPLICATES} are recommended",
            reps.replicates()
        ));
    }
    let dev = |row: &Vec<f64>, k: usize| (row[k] - estimate[k]).abs() / scale[k];
    let sup: Vec<f64> = reps.beta.iter().map(|row| (0..kk).map(|k| dev(row, k)).fold(0.0, f64::max)).collect();
    let c = upper_order_statistic(sup, alpha);
    let pointwise_critical =
        (0..kk).map(|k| upper_order_statistic(reps.beta.iter().map(|r| dev(r, k)).collect(), alpha)).collect();
    Ok(UniformBand {
        critical_value: c,
        pointwise_critical,
        lower: estimate.iter().zip(&scale).map(|(b, s)| b - c * s).collect(),
        upper: estimate.iter().zip(&scale).map(|(b, s)| b + c * s).collect(),
        scale,
        warnings,
    })
}

/// Studentized pointwise intervals and the uniform band from gradient-bootstrap replicates.
pub fn gradient_inference(estimate: &[f64], reps: &ReplicateMatrix, alpha: f64) -> Result<InferenceResult> {
    band_inference(estimate, reps, alpha, InferenceMethod::GradientBootstrap)
}

/// Studentized pointwise intervals and the uniform band from any replicate set.
pub fn band_inference(
    estimate: &[f64],
    reps: &ReplicateMatrix,
    alpha: f64,
    method: InferenceMethod,
) -> Result<InferenceResult> {
    let band = uniform_band(estimate, reps, alpha)?;
    let half: Vec<f64> = band.pointwise_critical.iter().zip(&band.scale).map(|(c, s)| c * s).collect();
    Ok(InferenceResult {
        grid: reps.grid.clone(),
        method,
        alpha,
        estimate: estimate.to_vec(),
        se: band.scale.clone(),
        ci_lower: estimate.iter().zip(&half).map(|(b, h)| b - h).collect(),
        ci_upper: estimate.iter().zip(&half).map(|(b, h)| b + h).collect(),
        band_lower: Some(band.lower),
        band_upper: Some(band.upper),
        critical_value: Some(band.critical_value),
        replicates: reps.replicates(),
        redraws: reps.redraws,
        seed: Some(reps.seed),
        warnings: band.warnings,
    })
}
