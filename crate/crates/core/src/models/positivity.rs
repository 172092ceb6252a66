use serde::{Deserialize, Serialize};

use super::nuisance::ProbabilityModel;
use crate::data::Dataset;
use crate::error::{Error, Result};

#[derive(Debug, Clone, Copy, PartialEq, Serialize, Deserialize)]
pub struct FlaggedRecord {
    pub index: usize,
    pub probability: f64,
}

/// Records whose fitted (pre-clipping) probability falls outside `[c, 1 - c]`.
#[derive(Debug, Clone, PartialEq, Serialize, Deserialize)]
pub struct PositivityReport {
    pub threshold: f64,
    pub evaluated: usize,
    pub below: usize,
    pub above: usize,
    pub min: f64,
    pub max: f64,
    pub flagged: Vec<FlaggedRecord>,
}

impl PositivityReport {
    pub fn is_clean(&self) -> bool {
        self.flagged.is_empty()
    }
}

pub fn positivity_diagnostics(
    model: &dyn ProbabilityModel,
    d: &Dataset,
    c: f64,
) -> Result<PositivityReport> {
    if !(c > 0.0 && c < 0.5) {
        return Err(Error::InvalidParameter(format!("threshold c={c} must lie in (0, 0.5)")));
    }
    let mut report = PositivityReport {
        threshold: c,
        evaluated: 0,
        below: 0,
        above: 0,
        min: f64::INFINITY,
        max: f64::NEG_INFINITY,
        flagged: Vec::new(),
    };
    for (index, rec) in d.records.iter().enumerate() {
        let Some(p) = model.probability(rec.z, &rec.x) else { continue };
        report.evaluated += 1;
        report.min = report.min.min(p);
        report.max = report.max.max(p);
        if p < c {
            report.below += 1;
        } else if p > 1.0 - c {
            report.above += 1;
        } else {
            continue;
        }
        report.flagged.push(FlaggedRecord { index, probability: p });
    }
    Ok(report)
}
