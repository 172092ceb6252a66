//! Pointwise and uniform inference.

pub mod asymptotic;
pub mod band;
pub mod density;
pub mod gradient;
pub mod pairs;

pub use asymptotic::{
    asymptotic_variance, asymptotic_variance_with, balancing_weight_derivative, sigma_inv_e2,
    sigma_matrix, AsymptoticPieces, NuisanceTerms,
};
pub use band::{
    asymptotic_inference, band_inference, gradient_inference, normal_critical_value, pairs_inference,
    uniform_band, InferenceMethod, InferenceResult, UniformBand, MIN_BAND_REPLICATES,
};
pub use density::{effective_n, estimate_densities, kernel_density, Bandwidth, DensityEstimates};
pub use gradient::{gradient_bootstrap, multiplier, TiltSolver};
pub use pairs::{pairs_bootstrap, sample_quantile, sample_sd, BootstrapOptions, ReplicateMatrix};

use crate::data::Dataset;
use crate::error::Result;
use crate::estimator::{Nuisances, WqteFit};

/// Wald inference from the sandwich variance, with density warnings attached.
pub fn infer_asymptotic(
    d: &Dataset,
    fit: &WqteFit,
    nuisances: &Nuisances,
    bandwidth: Bandwidth,
    alpha: f64,
) -> Result<(InferenceResult, AsymptoticPieces)> {
    let dens = estimate_densities(fit, bandwidth)?;
    let pieces = asymptotic_variance(d, fit, nuisances, &dens)?;
    let mut inf = asymptotic_inference(&fit.grid, &fit.beta, &pieces.se, alpha)?;
    inf.warnings = dens.warnings;
    Ok((inf, pieces))
}
