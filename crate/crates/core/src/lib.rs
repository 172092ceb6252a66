//! Weighted quantile treatment effects with double-sampled missing outcomes.

pub mod data;
pub mod error;
pub mod estimator;
pub mod models;
pub mod rng;
pub mod simulation;
pub mod variance;

pub use data::{
    validate_dataset, Dataset, EstimatorVariant, GSpec, ObservedRecord, PhaseCounts,
    QuantileGrid, ValidationReport, Violation,
};
pub use error::{Error, Result};
