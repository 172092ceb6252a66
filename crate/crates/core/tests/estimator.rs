use proptest::prelude::*;
use rand::Rng as _;
use wqte_core::estimator::{
    compute_weights, estimate_with_weights, fit_wqte, weighted_quantile, NuisanceConfig, WqteFit,
};
use wqte_core::rng::substream;
use wqte_core::simulation::{
    oracle_qte, simulate_datasets, simulation_nuisance_config, strata_sizes, SimScenario,
};
use wqte_core::variance::{infer_asymptotic, Bandwidth};
use wqte_core::{Dataset, EstimatorVariant, GSpec, ObservedRecord, QuantileGrid};

const IV: EstimatorVariant = EstimatorVariant::DoubleSamplingEstimated;

fn observed(s: &SimScenario, rep: u64) -> Dataset {
    let sizes = strata_sizes(s).unwrap();
    simulate_datasets(s, &sizes, rep).unwrap().1
}

fn fit_iv(d: &Dataset, grid: &QuantileGrid) -> WqteFit {
    fit_wqte(d, IV, GSpec::Population, &simulation_nuisance_config(), grid).unwrap().0
}

fn map_outcomes(d: &Dataset, f: impl Fn(f64) -> f64) -> Dataset {
    let mut out = d.clone();
    for r in &mut out.records {
        r.y = r.y.map(&f);
    }
    out
}

#[test]
fn quantile_matches_exhaustive_scan() {
    let mut rng = substream(5, 200, 0);
    for _ in 0..500 {
        let values: Vec<f64> = (0..7).map(|_| rng.gen::<f64>() * 10.0).collect();
        let weights: Vec<f64> = (0..7).map(|_| rng.gen::<f64>() + 0.01).collect();
        let total: f64 = weights.iter().sum();
        let target = rng.gen::<f64>() * total;
        // Smallest observed v whose cumulative weight reaches the target.
        let scan = values
            .iter()
            .copied()
            .filter(|&v| {
                let mass: f64 = values.iter().zip(&weights).filter(|(y, _)| **y <= v).map(|(_, w)| w).sum();
                mass >= target
            })
            .fold(f64::INFINITY, f64::min);
        assert_eq!(weighted_quantile(&values, &weights, target).unwrap(), scan);
    }
}

#[test]
fn outcome_rescaling_and_shift() {
    let s = SimScenario::homogeneous();
    let d = observed(&s, 0);
    let grid = QuantileGrid::default();
    let base = fit_iv(&d, &grid);

    let doubled = fit_iv(&map_outcomes(&d, |y| 2.0 * y), &grid);
    for k in 0..grid.len() {
        assert_eq!(doubled.beta0[k], 2.0 * base.beta0[k]);
        assert_eq!(doubled.beta[k], 2.0 * base.beta[k]);
    }

    let scaled = fit_iv(&map_outcomes(&d, |y| 3.7 * y), &grid);
    let shifted = fit_iv(&map_outcomes(&d, |y| y - 5.25), &grid);
    for k in 0..grid.len() {
        assert!((scaled.beta[k] - 3.7 * base.beta[k]).abs() < 1e-12);
        assert!((shifted.beta0[k] - (base.beta0[k] - 5.25)).abs() < 1e-12);
        assert!((shifted.beta[k] - base.beta[k]).abs() < 1e-12);
    }
}

#[test]
fn weight_scale_invariance() {
    let d = observed(&SimScenario::heterogeneous(), 1);
    let grid = QuantileGrid::range(0.05, 0.95, 0.05).unwrap();
    let base = fit_iv(&d, &grid);
    for c in [0.125, 2.0, 1024.0, 0.37, 13.0] {
        let fit = estimate_with_weights(&d, IV, GSpec::Population, base.weights.scaled(c), &grid).unwrap();
        assert_eq!(fit.beta0, base.beta0, "scale {c}");
        assert_eq!(fit.beta, base.beta, "scale {c}");
    }
}

#[test]
fn randomized_treatment_makes_g_irrelevant() {
    let s = SimScenario { n: 20_000, ..SimScenario::homogeneous() };
    let mut d = observed(&s, 2);
    let mut rng = substream(9, 201, 0);
    for r in &mut d.records {
        r.z = rng.gen::<f64>() < 0.5;
    }
    let grid = QuantileGrid::default();
    let cfg = NuisanceConfig::default();
    let v = EstimatorVariant::CompleteCase;
    let (pop, _) = fit_wqte(&d, v, GSpec::Population, &cfg, &grid).unwrap();
    let (att, _) = fit_wqte(&d, v, GSpec::Treated, &cfg, &grid).unwrap();
    for k in 0..grid.len() {
        assert!((pop.beta[k] - att.beta[k]).abs() < 0.02, "tau {}: {} vs {}", grid.taus()[k], pop.beta[k], att.beta[k]);
    }
}

#[test]
fn homogeneous_effect_recovered_at_large_n() {
    let s = SimScenario { n: 10_000, ..SimScenario::homogeneous() };
    let d = observed(&s, 0);
    let grid = QuantileGrid::default();
    let (fit, nuisances) = fit_wqte(&d, IV, GSpec::Population, &simulation_nuisance_config(), &grid).unwrap();
    let (inf, _) = infer_asymptotic(&d, &fit, &nuisances, Bandwidth::Silverman, 0.05).unwrap();
    for k in 0..grid.len() {
        assert!((fit.beta[k] - 1.0).abs() < 4.0 * inf.se[k], "tau {}: {}", grid.taus()[k], fit.beta[k]);
    }
}

#[test]
fn heterogeneous_effect_tracks_oracle() {
    let s = SimScenario { n: 10_000, ..SimScenario::heterogeneous() };
    let d = observed(&s, 0);
    let grid = QuantileGrid::default();
    let truth = oracle_qte(&s, &grid, 2_000_000, 77).unwrap();
    let (fit, nuisances) = fit_wqte(&d, IV, GSpec::Population, &simulation_nuisance_config(), &grid).unwrap();
    let (inf, _) = infer_asymptotic(&d, &fit, &nuisances, Bandwidth::Silverman, 0.05).unwrap();
    for k in 0..grid.len() {
        assert!((fit.beta[k] - truth.beta[k]).abs() < 4.0 * inf.se[k]);
    }
    assert!(truth.beta.windows(2).all(|w| w[1] > w[0]));
    let rise = fit.beta[8] - fit.beta[0];
    assert!(rise > 2.0 * (inf.se[8].powi(2) + inf.se[0].powi(2)).sqrt(), "rise {rise}");
}

#[test]
fn residuals_within_subgradient_gap_on_simulated_draw() {
    let d = observed(&SimScenario::homogeneous(), 3);
    let fit = fit_iv(&d, &QuantileGrid::range(0.02, 0.98, 0.02).unwrap());
    let max = fit.weights.omega.iter().copied().fold(0.0, f64::max);
    let bound = max / fit.total_omega();
    for r in &fit.residuals {
        assert!(r[0].abs() <= bound && r[1].abs() <= bound, "{r:?} vs {bound}");
    }
}

#[test]
fn unobserved_records_carry_no_weight() {
    let d = observed(&SimScenario::homogeneous(), 4);
    let cfg = simulation_nuisance_config();
    let n = wqte_core::estimator::fit_nuisances(&d, IV, &cfg).unwrap();
    let w = compute_weights(&d, IV, GSpec::Population, &n).unwrap();
    for (rec, omega) in d.records.iter().zip(&w.omega) {
        assert_eq!(*omega == 0.0, !rec.r && !rec.s);
    }
}

fn random_arms(seed: u64, n: usize) -> (Dataset, Vec<f64>) {
    let mut rng = substream(seed, 202, 0);
    let recs: Vec<ObservedRecord> = (0..n)
        .map(|i| {
            let z = match i % 4 {
                0 => true,
                1 => false,
                _ => rng.gen::<bool>(),
            };
            ObservedRecord::observed(rng.gen::<f64>() * 5.0 - 1.0, z, vec![])
        })
        .collect();
    let w = (0..n).map(|_| rng.gen::<f64>() * 3.0 + 0.05).collect();
    (Dataset::new(recs, 0), w)
}

proptest! {
    #![proptest_config(ProptestConfig::with_cases(200))]

    #[test]
    fn arm_quantiles_increase_with_level(seed in 0u64..1_000_000, n in 4usize..80) {
        let (d, omega) = random_arms(seed, n);
        let grid = QuantileGrid::range(0.01, 0.99, 0.01).unwrap();
        let weights = wqte_core::estimator::UnitWeights {
            components: omega
                .iter()
                .map(|&w| wqte_core::estimator::WeightComponents {
                    g: 1.0,
                    e: 0.5,
                    observance_probability: None,
                    observance_factor: 1.0,
                    w_g: w,
                })
                .collect(),
            omega,
        };
        let fit = estimate_with_weights(&d, EstimatorVariant::Full, GSpec::Population, weights, &grid).unwrap();
        let treated = &fit.beta1;
        for k in 1..grid.len() {
            prop_assert!(fit.beta0[k] >= fit.beta0[k - 1]);
            prop_assert!(treated[k] >= treated[k - 1]);
        }
    }
}
