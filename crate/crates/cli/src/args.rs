//! Command-line arguments.

use std::path::PathBuf;

use clap::{Args, Parser, Subcommand, ValueEnum};
use serde::Serialize;

#[derive(Debug, Parser)]
#[command(name = "wqte", version, about = "Weighted quantile treatment effects with double-sampled outcomes")]
pub struct Cli {
    /// Worker threads for parallel work (default: all cores). Results do not depend on it.
    #[arg(long, global = true)]
    pub threads: Option<usize>,

    #[command(subcommand)]
    pub command: Command,
}

#[derive(Debug, Subcommand)]
pub enum Command {
    /// Point estimates with pointwise confidence intervals.
    Estimate(EstimateArgs),
    /// Point estimates with a bootstrap uniform confidence band.
    Band(BandArgs),
    /// Monte Carlo study of the five estimators.
    Simulate(SimulateArgs),
    /// Ground-truth effects of a simulation scenario.
    Oracle(OracleArgs),
    /// Check a dataset against the record and dataset invariants.
    Validate(ValidateArgs),
}

#[derive(Debug, Clone, Args)]
pub struct DataArgs {
    /// CSV file with header columns y, z, r, s and covariates.
    #[arg(long)]
    pub input: PathBuf,
    /// Role renames, e.g. `y=outcome,z=treated`.
    #[arg(long)]
    pub map: Option<String>,
    /// Covariate columns in order (default: every column not used for a role).
    #[arg(long, value_delimiter = ',')]
    pub covariates: Option<Vec<String>>,
}

#[derive(Debug, Clone, Args)]
pub struct ModelArgs {
    /// Estimator: I (full), II (complete case), III (double sampling, known e),
    /// IV (double sampling, fitted e) or V (MAR).
    #[arg(long, default_value = "IV")]
    pub variant: String,
    /// Target weighting: population or treated.
    #[arg(long, default_value = "population")]
    pub g: String,
    /// Quantile levels: a list `0.25,0.5,0.75` or a range `start:stop:step`.
    #[arg(long, default_value = "0.1:0.9:0.1")]
    pub taus: String,
    #[arg(long, default_value_t = 0.05)]
    pub alpha: f64,
    /// Known propensity coefficients (intercept first, then one per covariate); required by variant III.
    #[arg(long = "true-e", value_delimiter = ',', allow_hyphen_values = true)]
    pub true_e: Option<Vec<f64>>,
    /// Stratified double-sampling design as `column:threshold` pairs, e.g.
    /// `x1:0.5,x2:1`; the double-sampling probability is then estimated per
    /// treatment-by-cell stratum instead of by logistic regression.
    #[arg(long)]
    pub eta_strata: Option<String>,
    /// Accept strata in which every eligible record was double-sampled.
    #[arg(long)]
    pub allow_census: bool,
}

#[derive(Debug, Clone, Copy, PartialEq, Eq, ValueEnum, Serialize)]
#[serde(rename_all = "kebab-case")]
pub enum SeMethod {
    Asymptotic,
    Pairs,
    Gradient,
    None,
}

#[derive(Debug, Clone, Copy, PartialEq, Eq, ValueEnum, Serialize)]
#[serde(rename_all = "kebab-case")]
pub enum BandMethod {
    Gradient,
    Pairs,
}

#[derive(Debug, Clone, Args)]
pub struct EstimateArgs {
    #[command(flatten)]
    pub data: DataArgs,
    #[command(flatten)]
    pub model: ModelArgs,
    /// Standard-error method.
    #[arg(long = "se", value_enum, default_value = "asymptotic")]
    pub se: SeMethod,
    /// Kernel bandwidth for the density in the sandwich variance: `silverman` or a positive number.
    #[arg(long, default_value = "silverman")]
    pub bandwidth: String,
    /// Bootstrap replicates when `--se` is a bootstrap method.
    #[arg(long = "B", default_value_t = 500)]
    pub replicates: usize,
    /// Required when `--se` is a bootstrap method.
    #[arg(long)]
    pub seed: Option<u64>,
    /// Output path stem; `<stem>.json` and `<stem>.csv` are written. Default: JSON on stdout.
    #[arg(long)]
    pub output: Option<PathBuf>,
}

#[derive(Debug, Clone, Args)]
pub struct BandArgs {
    #[command(flatten)]
    pub data: DataArgs,
    #[command(flatten)]
    pub model: ModelArgs,
    #[arg(long, value_enum, default_value = "gradient")]
    pub method: BandMethod,
    #[arg(long = "B", default_value_t = 500)]
    pub replicates: usize,
    #[arg(long)]
    pub seed: u64,
    #[arg(long)]
    pub output: Option<PathBuf>,
}

#[derive(Debug, Clone, Copy, PartialEq, Eq, ValueEnum)]
pub enum Preset {
    Homogeneous,
    Heterogeneous,
}

#[derive(Debug, Clone, Args)]
pub struct ScenarioArgs {
    /// JSON scenario file; omitted fields take their defaults.
    #[arg(long)]
    pub scenario: Option<PathBuf>,
    /// Built-in scenario used when no file is given.
    #[arg(long, value_enum, default_value = "homogeneous")]
    pub preset: Preset,
    /// Overrides the scenario seed. A seed must come from here or the scenario file.
    #[arg(long)]
    pub seed: Option<u64>,
    #[arg(long)]
    pub taus: Option<String>,
    #[arg(long)]
    pub g: Option<String>,
    /// Records per simulated dataset.
    #[arg(long)]
    pub n: Option<usize>,
    /// 10,000 records, replications and bootstrap replicates.
    #[arg(long)]
    pub paper_scale: bool,
}

#[derive(Debug, Clone, Args)]
pub struct SimulateArgs {
    #[command(flatten)]
    pub scenario: ScenarioArgs,
    #[arg(long)]
    pub replications: Option<usize>,
    #[arg(long = "B")]
    pub replicates: Option<usize>,
    #[arg(long)]
    pub alpha: Option<f64>,
    /// Also run the pairs bootstrap for the double-sampling estimators.
    #[arg(long)]
    pub pairs: bool,
    /// Skip the gradient-bootstrap bands.
    #[arg(long)]
    pub no_bands: bool,
    #[arg(long)]
    pub oracle_draws: Option<usize>,
    /// Directory to receive the first replicate's complete and observed data as CSV.
    #[arg(long)]
    pub emit_data: Option<PathBuf>,
    #[arg(long)]
    pub output: Option<PathBuf>,
}

#[derive(Debug, Clone, Args)]
pub struct OracleArgs {
    #[command(flatten)]
    pub scenario: ScenarioArgs,
    /// Monte Carlo draws (default: the scenario's `oracle_draws`).
    #[arg(long)]
    pub draws: Option<usize>,
    #[arg(long)]
    pub output: Option<PathBuf>,
}

#[derive(Debug, Clone, Args)]
pub struct ValidateArgs {
    #[command(flatten)]
    pub data: DataArgs,
    #[arg(long)]
    pub output: Option<PathBuf>,
}
