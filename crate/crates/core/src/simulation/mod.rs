//! Monte Carlo study of the estimators under outcome-dependent missingness.

pub mod dgp;
pub mod experiment;
pub mod oracle;
pub mod scenario;

pub use dgp::{
    double_sample_stratified, expected_eligible, generate_complete, impose_missingness,
    pareto_error, response_probability, simulate_datasets, strata_rule, strata_sizes, stratum_of, true_propensity, MaskedData,
    SamplingReport, N_STRATA, PROPENSITY_COEFFICIENTS,
};
pub use experiment::{
    run_experiment, run_experiment_detailed, run_replicate, simulation_nuisance_config, summarize,
    BandSummary, EstimatorSummary, IntervalSummary, ReplicateOutcome, SimReport, VariantOutcome,
};
pub use oracle::{oracle_qte, OracleQte};
pub use scenario::{Missingness, SimScenario, StrataAllocation};
