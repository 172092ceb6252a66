//! Weights and the weighted quantile estimator.

pub mod quantile;
pub mod weights;
pub mod wqte;

pub use quantile::{weighted_quantile, SortedValues};
pub use weights::{
    balancing_weight, compute_weights, Nuisances, ObservanceModel, Propensity, UnitWeights,
    WeightComponents,
};
pub use wqte::{
    arm_samples, estimate_with_weights, estimate_wqte, estimating_equation_residual, fit_nuisances,
    fit_wqte, residual_at, ArmSample, NuisanceConfig, WqteFit,
};
