//! Per-unit inverse-probability weights
//! `omega = observance_factor * W^g(Z, X)`.

use serde::{Deserialize, Serialize};

use crate::data::{Dataset, EstimatorVariant, GSpec};
use crate::error::{Error, Result};
use crate::models::{clip_probability, EtaModel, KnownPropensity, LogisticModel, ProbabilityModel};

/// Source of the propensity score `e(x)`.
#[derive(Debug, Clone)]
pub enum Propensity {
    Fitted(LogisticModel),
    Known(KnownPropensity),
}

impl Propensity {
    pub fn evaluate(&self, x: &[f64]) -> f64 {
        match self {
            Propensity::Fitted(m) => m.probability(false, x).expect("logistic model is total"),
            Propensity::Known(k) => k.evaluate(x),
        }
    }

    pub fn fitted(&self) -> Option<&LogisticModel> {
        match self {
            Propensity::Fitted(m) => Some(m),
            Propensity::Known(_) => None,
        }
    }
}

/// Model for how outcomes came to be observed.
#[derive(Debug, Clone)]
pub enum ObservanceModel {
    /// `eta(z, x)` among initially unobserved records.
    DoubleSampling(EtaModel),
    /// `pi(z, x) = P(R = 1 | Z, X)`.
    Mar(LogisticModel),
}

#[derive(Debug, Clone)]
pub struct Nuisances {
    pub propensity: Propensity,
    pub observance: Option<ObservanceModel>,
}

#[derive(Debug, Clone, Copy, PartialEq, Serialize, Deserialize)]
pub struct WeightComponents {
    pub g: f64,
    /// Propensity score after clipping.
    pub e: f64,
    /// `eta` (double-sampled records) or `pi` (MAR variant) after clipping.
    pub observance_probability: Option<f64>,
    pub observance_factor: f64,
    /// `W^g(z, x)`.
    pub w_g: f64,
}

#[derive(Debug, Clone, PartialEq, Serialize, Deserialize)]
pub struct UnitWeights {
    pub omega: Vec<f64>,
    pub components: Vec<WeightComponents>,
}

impl UnitWeights {
    pub fn total(&self) -> f64 {
        self.omega.iter().sum()
    }

    /// Multiplies every weight by `c`, leaving components untouched.
    pub fn scaled(&self, c: f64) -> Self {
        Self { omega: self.omega.iter().map(|w| w * c).collect(), components: self.components.clone() }
    }
}

fn strictly_inside(p: f64) -> bool {
    p.is_finite() && p > 0.0 && p < 1.0
}

/// `W^g = g z / e + g (1 - z) / (1 - e)`.
pub fn balancing_weight(g: f64, e: f64, z: bool) -> f64 {
    if z {
        g / e
    } else {
        g / (1.0 - e)
    }
}

/// Builds `omega` for every record.
///
/// Variants I and II use `r`, III and IV use `r + s (1 - r) / eta`, and V uses
/// `r / pi`. Records with `r = s = 0` always receive zero weight.
pub fn compute_weights(
    d: &Dataset,
    variant: EstimatorVariant,
    g: GSpec,
    nuisances: &Nuisances,
) -> Result<UnitWeights> {
    match (variant, &nuisances.propensity) {
        (EstimatorVariant::DoubleSamplingKnownE, Propensity::Fitted(_)) => {
            return Err(Error::Configuration(
                "variant III requires a known propensity function".into(),
            ))
        }
        (v, Propensity::Known(_)) if v != EstimatorVariant::DoubleSamplingKnownE => {
            return Err(Error::Configuration(format!("variant {v} requires a fitted propensity model")))
        }
        _ => {}
    }
    let eta = match (&nuisances.observance, variant) {
        (Some(ObservanceModel::DoubleSampling(m)), v) if v.uses_double_sampling() => Some(m),
        _ => None,
    };
    let pi = match (&nuisances.observance, variant) {
        (Some(ObservanceModel::Mar(m)), EstimatorVariant::Mar) => Some(m),
        (_, EstimatorVariant::Mar) => {
            return Err(Error::Configuration("variant V requires a MAR observance model".into()))
        }
        _ => None,
    };

    let n = d.len();
    let mut omega = Vec::with_capacity(n);
    let mut components = Vec::with_capacity(n);
    for (i, rec) in d.records.iter().enumerate() {
        let e_raw = nuisances.propensity.evaluate(&rec.x);
        if !strictly_inside(e_raw) {
            return Err(Error::Positivity(format!("record {i}: propensity score {e_raw}")));
        }
        let e = clip_probability(e_raw);
        let gv = g.value(e);
        if !(gv.is_finite() && gv > 0.0) {
            return Err(Error::Positivity(format!("record {i}: g(x) = {gv}")));
        }
        let w_g = balancing_weight(gv, e, rec.z);

        let (prob, factor) = match variant {
            EstimatorVariant::Full | EstimatorVariant::CompleteCase => (None, f64::from(u8::from(rec.r))),
            EstimatorVariant::DoubleSamplingKnownE | EstimatorVariant::DoubleSamplingEstimated => {
                if rec.r {
                    (None, 1.0)
                } else if rec.s {
                    let model = eta.ok_or_else(|| {
                        Error::Configuration(format!(
                            "variant {variant} has double-sampled records but no eta model"
                        ))
                    })?;
                    let p = model.as_model().probability(rec.z, &rec.x).ok_or_else(|| {
                        Error::Positivity(format!(
                            "record {i}: double-sampling probability undefined for its stratum"
                        ))
                    })?;
                    let census = matches!(model, EtaModel::Strata(_)) && p == 1.0;
                    if !census && !strictly_inside(p) {
                        return Err(Error::Positivity(format!(
                            "record {i}: double-sampling probability {p}"
                        )));
                    }
                    let p = if census { 1.0 } else { clip_probability(p) };
                    (Some(p), 1.0 / p)
                } else {
                    (None, 0.0)
                }
            }
            EstimatorVariant::Mar => {
                let model = pi.expect("checked above");
                let p = model.probability(rec.z, &rec.x).expect("logistic model is total");
                if !strictly_inside(p) {
                    return Err(Error::Positivity(format!("record {i}: observance probability {p}")));
                }
                let p = clip_probability(p);
                (Some(p), if rec.r { 1.0 / p } else { 0.0 })
            }
        };
        omega.push(factor * w_g);
        components.push(WeightComponents {
            g: gv,
            e,
            observance_probability: prob,
            observance_factor: factor,
            w_g,
        });
    }
    Ok(UnitWeights { omega, components })
}

#[cfg(test)]
mod tests {
    use super::*;
    use crate::data::ObservedRecord;
    use crate::models::{fit_double_sampling, EtaDesign, IrlsOptions, StrataRule};

    fn half() -> Propensity {
        Propensity::Known(KnownPropensity::new("half", |_| 0.5))
    }

    fn ds_dataset() -> Dataset {
        // One stratum per arm on x; arm 0 has 1 of 4 unobserved records sampled.
        let mut recs = vec![
            ObservedRecord::observed(1.0, true, vec![0.0]),
            ObservedRecord::observed(2.0, false, vec![0.0]),
            ObservedRecord::new(Some(3.0), false, vec![0.0], false, true),
            ObservedRecord::new(None, true, vec![0.0], false, false),
            ObservedRecord::new(Some(4.0), true, vec![0.0], false, true),
        ];
        for _ in 0..3 {
            recs.push(ObservedRecord::new(None, false, vec![0.0], false, false));
        }
        Dataset::new(recs, 1)
    }

    fn nuisances(d: &Dataset) -> Nuisances {
        let design = EtaDesign::Strata { rule: StrataRule { thresholds: vec![] }, allow_census: false };
        let eta = fit_double_sampling(d, &design, &IrlsOptions::default()).unwrap();
        Nuisances { propensity: half(), observance: Some(ObservanceModel::DoubleSampling(eta)) }
    }

    #[test]
    fn direct_formula_cases() {
        let d = ds_dataset();
        let w = compute_weights(&d, EstimatorVariant::DoubleSamplingKnownE, GSpec::Population, &nuisances(&d)).unwrap();
        // r=1, z=1, e=0.5
        assert_eq!(w.omega[0], 2.0);
        // r=0, s=1, z=0, eta = 1/4
        assert_eq!(w.components[2].observance_probability, Some(0.25));
        assert_eq!(w.omega[2], 8.0);
        // r=0, s=0
        assert_eq!(w.omega[3], 0.0);
        for (c, o) in w.components.iter().zip(&w.omega) {
            assert_eq!(*o, c.observance_factor * c.w_g);
        }
    }

    #[test]
    fn treated_target_weights() {
        let d = ds_dataset();
        let w = compute_weights(&d, EstimatorVariant::DoubleSamplingKnownE, GSpec::Treated, &nuisances(&d)).unwrap();
        // g = e = 0.5: treated W = 1, control W = e / (1 - e) = 1.
        assert_eq!(w.omega[0], 1.0);
        assert_eq!(w.omega[1], 1.0);
    }

    #[test]
    fn variant_requirements() {
        let d = ds_dataset();
        let nu = nuisances(&d);
        assert!(matches!(
            compute_weights(&d, EstimatorVariant::DoubleSamplingEstimated, GSpec::Population, &nu),
            Err(Error::Configuration(_))
        ));
        let no_eta = Nuisances { propensity: half(), observance: None };
        assert!(matches!(
            compute_weights(&d, EstimatorVariant::DoubleSamplingKnownE, GSpec::Population, &no_eta),
            Err(Error::Configuration(_))
        ));
        let degenerate = Nuisances {
            propensity: Propensity::Known(KnownPropensity::new("one", |_| 1.0)),
            observance: nu.observance.clone(),
        };
        assert!(matches!(
            compute_weights(&d, EstimatorVariant::DoubleSamplingKnownE, GSpec::Population, &degenerate),
            Err(Error::Positivity(_))
        ));
    }
}
