//! Data-generating process: covariates, treatment, outcome, outcome-dependent
//! missingness, and stratified second-phase sampling.

use rand::seq::index::sample;
use rand::Rng as _;
use serde::{Deserialize, Serialize};

use super::scenario::{Missingness, SimScenario, StrataAllocation};
use crate::data::{Dataset, ObservedRecord};
use crate::error::{Error, Result};
use crate::models::{expit, StrataRule};
use crate::rng::{domain, substream, Rng};

pub const N_STRATA: usize = 8;

/// True propensity coefficients on `(1, x1, x2)`.
pub const PROPENSITY_COEFFICIENTS: [f64; 3] = [0.5, -0.5, -0.5];

pub fn true_propensity(x: &[f64]) -> f64 {
    expit(PROPENSITY_COEFFICIENTS[0] + PROPENSITY_COEFFICIENTS[1] * x[0] + PROPENSITY_COEFFICIENTS[2] * x[1])
}

/// `4 z + 2 [x1 >= 0.5] + [x2 >= 1]`.
pub fn stratum_of(z: bool, x: &[f64]) -> usize {
    4 * usize::from(z) + 2 * usize::from(x[0] >= 0.5) + usize::from(x[1] >= 1.0)
}

/// The same dichotomization as a [`StrataRule`] for fitting the sampling model.
pub fn strata_rule() -> StrataRule {
    StrataRule { thresholds: vec![(0, 0.5), (1, 1.0)] }
}

/// Pareto draw `scale * U^(-1/shape) - shift`.
pub fn pareto_error(s: &SimScenario, u: f64) -> f64 {
    s.pareto_scale * u.powf(-1.0 / s.pareto_shape) - s.pareto_shift
}

/// Draws `(x1, x2, z, eps)` for one unit.
fn draw_unit(s: &SimScenario, rng: &mut Rng) -> ([f64; 2], bool, f64) {
    let x1: f64 = rng.gen();
    let x2: f64 = 2.0 * rng.gen::<f64>();
    let z = rng.gen::<f64>() < true_propensity(&[x1, x2]);
    // 1 - U lies in (0, 1], keeping the Pareto draw finite.
    let eps = pareto_error(s, 1.0 - rng.gen::<f64>());
    ([x1, x2], z, eps)
}

/// `Y = 1 + Z + X1 + X2 + (1 + rho Z) eps`.
pub fn outcome(s: &SimScenario, x: [f64; 2], z: bool, eps: f64) -> f64 {
    let zf = f64::from(u8::from(z));
    1.0 + zf + x[0] + x[1] + (1.0 + s.rho * zf) * eps
}

/// Complete data (`r = 1` everywhere) for one replication.
pub fn generate_complete(s: &SimScenario, replicate: u64) -> Dataset {
    let mut rng = substream(s.seed, domain::DATA, replicate);
    let records = (0..s.n)
        .map(|_| {
            let (x, z, eps) = draw_unit(s, &mut rng);
            ObservedRecord::observed(outcome(s, x, z, eps), z, x.to_vec())
        })
        .collect();
    Dataset::new(records, 2).with_column_names(vec!["x1".into(), "x2".into()])
}

/// `P(R = 1 | Y)`.
pub fn response_probability(m: Missingness, y: f64) -> Result<f64> {
    match m {
        Missingness::Homogeneous => Ok(expit(1.0 + 4.3 * y - y * y)),
        Missingness::Heterogeneous => {
            if y < 0.0 {
                return Err(Error::Domain(format!(
                    "heterogeneous response model needs y >= 0, got {y}"
                )));
            }
            Ok(expit(1.0 + 3.8 * y - y.powf(1.8)))
        }
    }
}

/// Data after missingness: outcomes with `r = 0` are masked in `data` and kept
/// only in `hidden`.
#[derive(Debug, Clone)]
pub struct MaskedData {
    pub data: Dataset,
    /// True outcome of each masked record, `None` where observed.
    pub hidden: Vec<Option<f64>>,
}

/// Draws `R ~ Bernoulli(pi(Y))` and masks the unobserved outcomes.
pub fn impose_missingness(complete: &Dataset, s: &SimScenario, replicate: u64) -> Result<MaskedData> {
    let mut rng = substream(s.seed, domain::MISSINGNESS, replicate);
    let mut records = Vec::with_capacity(complete.len());
    let mut hidden = Vec::with_capacity(complete.len());
    for (i, rec) in complete.records.iter().enumerate() {
        let y = rec.y.ok_or_else(|| Error::InvalidDataset(format!("record {i} has no outcome")))?;
        let r = rng.gen::<f64>() < response_probability(s.missingness, y)?;
        records.push(ObservedRecord::new(r.then_some(y), rec.z, rec.x.clone(), r, false));
        hidden.push((!r).then_some(y));
    }
    Ok(MaskedData { data: Dataset { records, ..complete.clone() }, hidden })
}

#[derive(Debug, Clone, Default, PartialEq, Serialize, Deserialize)]
pub struct SamplingReport {
    pub requested: [usize; N_STRATA],
    pub eligible: [usize; N_STRATA],
    pub selected: [usize; N_STRATA],
}

impl SamplingReport {
    /// Requested minus selected, per stratum.
    pub fn shortfall(&self) -> [usize; N_STRATA] {
        std::array::from_fn(|k| self.requested[k] - self.selected[k])
    }

    pub fn total_shortfall(&self) -> usize {
        self.shortfall().iter().sum()
    }
}

/// Simple random sampling without replacement of `sizes[k]` unobserved records
/// in each stratum; sampled records get `s = 1` and their outcome revealed.
pub fn double_sample_stratified(masked: &MaskedData, sizes: &[usize; N_STRATA], rng: &mut Rng) -> (Dataset, SamplingReport) {
    let mut pools: [Vec<usize>; N_STRATA] = Default::default();
    for (i, rec) in masked.data.records.iter().enumerate() {
        if !rec.r {
            pools[stratum_of(rec.z, &rec.x)].push(i);
        }
    }
    let mut out = masked.data.clone();
    let mut report = SamplingReport { requested: *sizes, ..Default::default() };
    for (k, pool) in pools.iter().enumerate() {
        let take = sizes[k].min(pool.len());
        report.eligible[k] = pool.len();
        report.selected[k] = take;
        for j in sample(rng, pool.len(), take).into_iter() {
            let i = pool[j];
            out.records[i].s = true;
            out.records[i].y = masked.hidden[i];
        }
    }
    (out, report)
}

const PILOT_SEED: u64 = 0x05EE_D0FA_110C;
const PILOT_SIZE: usize = 200_000;

/// Replicate `replicate` of the scenario: the complete data and the
/// double-sampled observed data built from it.
pub fn simulate_datasets(
    s: &SimScenario,
    sizes: &[usize; N_STRATA],
    replicate: u64,
) -> Result<(Dataset, Dataset, SamplingReport)> {
    let complete = generate_complete(s, replicate);
    let masked = impose_missingness(&complete, s, replicate)?;
    let mut rng = substream(s.seed, domain::DOUBLE_SAMPLING, replicate);
    let (observed, report) = double_sample_stratified(&masked, sizes, &mut rng);
    Ok((complete, observed, report))
}

/// Expected number of unobserved records per stratum in a sample of `s.n`,
/// estimated from a fixed pilot draw.
pub fn expected_eligible(s: &SimScenario) -> Result<[f64; N_STRATA]> {
    let mut rng = substream(PILOT_SEED, domain::DATA, 0);
    let mut counts = [0usize; N_STRATA];
    for _ in 0..PILOT_SIZE {
        let (x, z, eps) = draw_unit(s, &mut rng);
        let y = outcome(s, x, z, eps);
        if rng.gen::<f64>() >= response_probability(s.missingness, y)? {
            counts[stratum_of(z, &x)] += 1;
        }
    }
    Ok(counts.map(|c| c as f64 * s.n as f64 / PILOT_SIZE as f64))
}

/// Per-stratum second-phase sample sizes for the scenario.
pub fn strata_sizes(s: &SimScenario) -> Result<[usize; N_STRATA]> {
    match &s.strata {
        StrataAllocation::Fixed { sizes } => Ok(*sizes),
        StrataAllocation::Proportional { fraction } => {
            let expected = expected_eligible(s)?;
            Ok(expected.map(|e| ((fraction * e).round() as usize).max(1)))
        }
    }
}
