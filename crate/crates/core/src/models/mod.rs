//! Nuisance-model fitting and diagnostics.

pub mod logistic;
pub mod nuisance;
pub mod positivity;

pub use logistic::{expit, fit_logistic, logit, IrlsOptions, LogisticFit};
pub use nuisance::{
    clip_probability, fit_double_sampling, fit_mar_observance, fit_propensity, DesignSpec,
    EtaDesign, EtaModel, KnownPropensity, LogisticModel, ProbabilityModel, StrataRule,
    StratumCount, StratumKey, StratumModel, PROB_CLIP,
};
pub use positivity::{positivity_diagnostics, FlaggedRecord, PositivityReport};
