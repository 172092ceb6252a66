//! Simulation scenarios.

use serde::{Deserialize, Serialize};

use crate::data::{GSpec, QuantileGrid};
use crate::error::{Error, Result};

/// Which outcome-dependent response model generates `R`.
#[derive(Debug, Clone, Copy, PartialEq, Eq, Serialize, Deserialize)]
#[serde(rename_all = "lowercase")]
pub enum Missingness {
    /// `pi(Y) = expit(1 + 4.3 Y - Y^2)`.
    Homogeneous,
    /// `pi(Y) = expit(1 + 3.8 Y - Y^1.8)`; requires `Y >= 0`.
    Heterogeneous,
}

/// How many `R = 0` records to double-sample in each of the eight strata.
#[derive(Debug, Clone, PartialEq, Serialize, Deserialize)]
#[serde(rename_all = "lowercase")]
pub enum StrataAllocation {
    /// Fixed sizes indexed by `4 z + 2 [x1 >= 0.5] + [x2 >= 1]`.
    Fixed { sizes: [usize; 8] },
    /// `max(1, round(fraction * expected eligible))` per stratum, with expected
    /// eligible counts taken from a large pilot draw of the scenario.
    Proportional { fraction: f64 },
}

fn default_n() -> usize {
    2000
}
fn default_shape() -> f64 {
    5.0
}
fn default_scale() -> f64 {
    1.0
}
fn default_missingness() -> Missingness {
    Missingness::Homogeneous
}
fn default_strata() -> StrataAllocation {
    StrataAllocation::Proportional { fraction: 0.22 }
}
fn default_replications() -> usize {
    500
}
fn default_b() -> usize {
    200
}
fn default_true() -> bool {
    true
}
fn default_oracle_draws() -> usize {
    10_000_000
}
fn default_alpha() -> f64 {
    0.05
}

#[derive(Debug, Clone, PartialEq, Serialize, Deserialize)]
#[serde(deny_unknown_fields)]
pub struct SimScenario {
    #[serde(default = "default_n")]
    pub n: usize,
    /// Treated-arm error multiplier `1 + rho`.
    #[serde(default)]
    pub rho: f64,
    #[serde(default = "default_shape")]
    pub pareto_shape: f64,
    #[serde(default = "default_scale")]
    pub pareto_scale: f64,
    /// Subtracted from the Pareto draw; `pareto_shift = pareto_scale` moves the
    /// support to start at 0.
    #[serde(default)]
    pub pareto_shift: f64,
    #[serde(default = "default_missingness")]
    pub missingness: Missingness,
    #[serde(default = "default_strata")]
    pub strata: StrataAllocation,
    #[serde(default)]
    pub grid: QuantileGrid,
    #[serde(default = "default_replications")]
    pub replications: usize,
    #[serde(default)]
    pub seed: u64,
    /// Bootstrap replicates per dataset.
    #[serde(default = "default_b")]
    pub bootstrap_replicates: usize,
    /// Pairs-bootstrap intervals for variants III and IV (slow).
    #[serde(default)]
    pub pairs_bootstrap: bool,
    /// Gradient-bootstrap uniform bands for variants III and IV.
    #[serde(default = "default_true")]
    pub gradient_bands: bool,
    #[serde(default = "default_oracle_draws")]
    pub oracle_draws: usize,
    #[serde(default = "default_alpha")]
    pub alpha: f64,
    #[serde(default)]
    pub g: GSpec,
}

impl Default for SimScenario {
    fn default() -> Self {
        Self::homogeneous()
    }
}

impl SimScenario {
    /// Constant treatment effect of 1 at every level.
    pub fn homogeneous() -> Self {
        Self {
            n: default_n(),
            rho: 0.0,
            pareto_shape: default_shape(),
            pareto_scale: default_scale(),
            pareto_shift: 0.0,
            missingness: Missingness::Homogeneous,
            strata: default_strata(),
            grid: QuantileGrid::default(),
            replications: default_replications(),
            seed: 0,
            bootstrap_replicates: default_b(),
            pairs_bootstrap: false,
            gradient_bands: true,
            oracle_draws: default_oracle_draws(),
            alpha: default_alpha(),
            g: GSpec::Population,
        }
    }

    /// Treated-arm errors scaled by 2.5, so the effect grows with the level.
    pub fn heterogeneous() -> Self {
        Self { rho: 1.5, missingness: Missingness::Heterogeneous, ..Self::homogeneous() }
    }

    /// Full-size study: 10,000 records, 10,000 replications and replicates.
    pub fn paper_scale(mut self) -> Self {
        self.n = 10_000;
        self.replications = 10_000;
        self.bootstrap_replicates = 10_000;
        self
    }

    pub fn validate(&self) -> Result<()> {
        let bad = |m: String| Err(Error::InvalidParameter(m));
        if self.n == 0 {
            return bad("scenario n must be positive".into());
        }
        if !(self.pareto_shape > 2.0) {
            return bad(format!("pareto_shape must exceed 2, got {}", self.pareto_shape));
        }
        if !(self.pareto_scale > 0.0) || !self.pareto_shift.is_finite() || !self.rho.is_finite() {
            return bad("pareto_scale must be positive; rho and pareto_shift finite".into());
        }
        if self.replications == 0 {
            return bad("replications must be positive".into());
        }
        if (self.gradient_bands || self.pairs_bootstrap) && self.bootstrap_replicates < 2 {
            return bad("bootstrap_replicates must be at least 2".into());
        }
        if self.oracle_draws == 0 {
            return bad("oracle_draws must be positive".into());
        }
        if !(self.alpha > 0.0 && self.alpha < 1.0) {
            return bad(format!("alpha must lie in (0, 1), got {}", self.alpha));
        }
        if let StrataAllocation::Proportional { fraction } = self.strata {
            if !(fraction > 0.0 && fraction <= 1.0) {
                return bad(format!("allocation fraction must lie in (0, 1], got {fraction}"));
            }
        }
        Ok(())
    }
}
