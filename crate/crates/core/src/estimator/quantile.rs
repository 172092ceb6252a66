//! Left-continuous weighted quantiles with tie pooling.

use crate::error::{Error, Result};

/// Values sorted once and grouped by equality.
///
/// Weighted quantiles for many targets, or for many weight vectors over the
/// same values, are read off the cumulative group weights by binary search.
#[derive(Debug, Clone)]
pub struct SortedValues {
    order: Vec<usize>,
    group_end: Vec<usize>,
    distinct: Vec<f64>,
}

impl SortedValues {
    pub fn new(values: &[f64]) -> Self {
        let mut order: Vec<usize> = (0..values.len()).collect();
        order.sort_unstable_by(|&a, &b| values[a].total_cmp(&values[b]).then(a.cmp(&b)));
        let mut group_end = Vec::new();
        let mut distinct = Vec::new();
        for (pos, &i) in order.iter().enumerate() {
            let v = values[i];
            if distinct.last() != Some(&v) {
                if !distinct.is_empty() {
                    group_end.push(pos);
                }
                distinct.push(v);
            }
        }
        if !distinct.is_empty() {
            group_end.push(order.len());
        }
        Self { order, group_end, distinct }
    }

    pub fn len(&self) -> usize {
        self.order.len()
    }

    pub fn is_empty(&self) -> bool {
        self.order.is_empty()
    }

    pub fn distinct(&self) -> &[f64] {
        &self.distinct
    }

    fn groups(&self) -> impl Iterator<Item = &[usize]> + '_ {
        let mut start = 0;
        self.group_end.iter().map(move |&end| {
            let g = &self.order[start..end];
            start = end;
            g
        })
    }

    /// Cumulative weight through each distinct value; the last entry is the total.
    pub fn cumulative(&self, weights: &[f64]) -> Vec<f64> {
        let mut acc = 0.0;
        self.groups()
            .map(|g| {
                acc += g.iter().map(|&i| weights[i]).sum::<f64>();
                acc
            })
            .collect()
    }

    /// Largest pooled weight at a single distinct value.
    pub fn max_group_weight(&self, weights: &[f64]) -> f64 {
        self.groups()
            .map(|g| g.iter().map(|&i| weights[i]).sum::<f64>())
            .fold(0.0, f64::max)
    }

    /// Smallest distinct value whose cumulative weight reaches `target`.
    pub fn quantile_at(&self, cumulative: &[f64], target: f64) -> f64 {
        let k = cumulative.partition_point(|&c| c < target);
        self.distinct[k.min(self.distinct.len() - 1)]
    }
}

/// Smallest `v` among `values` with `sum{w_i : values_i <= v} >= target_mass`.
///
/// Equal values have their weights pooled before the scan, so the result does
/// not depend on input order.
pub fn weighted_quantile(values: &[f64], weights: &[f64], target_mass: f64) -> Result<f64> {
    if values.len() != weights.len() {
        return Err(Error::InvalidParameter(format!(
            "{} values but {} weights",
            values.len(),
            weights.len()
        )));
    }
    if let Some(v) = values.iter().find(|v| !v.is_finite()) {
        return Err(Error::InvalidParameter(format!("non-finite value {v}")));
    }
    if let Some(w) = weights.iter().find(|w| !(w.is_finite() && **w >= 0.0)) {
        return Err(Error::InvalidParameter(format!("invalid weight {w}")));
    }
    if !weights.iter().any(|&w| w > 0.0) {
        return Err(Error::EmptyArm { arm: 0 });
    }
    let sorted = SortedValues::new(values);
    let cum = sorted.cumulative(weights);
    let total = *cum.last().expect("non-empty");
    if !(target_mass > 0.0 && target_mass <= total) {
        return Err(Error::InvalidParameter(format!(
            "target mass {target_mass} outside (0, {total}]"
        )));
    }
    Ok(sorted.quantile_at(&cum, target_mass))
}
