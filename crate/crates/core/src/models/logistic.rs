//! Maximum-likelihood logistic regression by Newton-Raphson (IRLS) with
//! step-halving.

use nalgebra::{DMatrix, DVector};
use serde::{Deserialize, Serialize};

use crate::error::{Error, Result};

#[derive(Debug, Clone, Copy, PartialEq, Serialize, Deserialize)]
pub struct IrlsOptions {
    /// Convergence threshold on `max_j |sum_i (y_i - p_i) x_ij|`.
    pub score_tol: f64,
    pub max_iter: usize,
    pub max_halvings: usize,
    /// Coefficients beyond this magnitude with a live score signal separation.
    pub separation_cap: f64,
}

impl Default for IrlsOptions {
    fn default() -> Self {
        Self { score_tol: 1e-8, max_iter: 100, max_halvings: 30, separation_cap: 30.0 }
    }
}

#[derive(Debug, Clone, PartialEq, Serialize, Deserialize)]
pub struct LogisticFit {
    /// Coefficients in the column order of the feature matrix.
    pub coefficients: Vec<f64>,
    pub converged: bool,
    pub iterations: usize,
    /// Final `max_j |score_j|`.
    pub score_norm: f64,
    /// Log-likelihood at the start and after every accepted step.
    pub loglik_trace: Vec<f64>,
}

impl LogisticFit {
    pub fn linear_predictor(&self, row: &[f64]) -> f64 {
        self.coefficients.iter().zip(row).map(|(b, x)| b * x).sum()
    }

    pub fn predict(&self, row: &[f64]) -> f64 {
        expit(self.linear_predictor(row))
    }
}

/// Logistic function, evaluated without overflow.
pub fn expit(t: f64) -> f64 {
    if t >= 0.0 {
        1.0 / (1.0 + (-t).exp())
    } else {
        let e = t.exp();
        e / (1.0 + e)
    }
}

pub fn logit(p: f64) -> f64 {
    (p / (1.0 - p)).ln()
}

/// Log-likelihood and fitted probabilities at `beta`.
fn evaluate(x: &DMatrix<f64>, y: &[bool], beta: &DVector<f64>) -> (f64, DVector<f64>) {
    let mut eta = x * beta;
    let mut ll = 0.0;
    for (t, &yi) in eta.iter_mut().zip(y) {
        // log(1 + exp(t)) and expit(t) share exp(-|t|).
        let e = (-t.abs()).exp();
        let softplus = t.max(0.0) + e.ln_1p();
        ll += if yi { *t - softplus } else { -softplus };
        *t = if *t >= 0.0 { 1.0 / (1.0 + e) } else { e / (1.0 + e) };
    }
    (ll, eta)
}

fn score(x: &DMatrix<f64>, y: &[bool], p: &DVector<f64>) -> DVector<f64> {
    let resid = DVector::from_iterator(
        y.len(),
        y.iter().zip(p.iter()).map(|(&yi, &pi)| f64::from(u8::from(yi)) - pi),
    );
    x.tr_mul(&resid)
}

fn inf_norm(v: &DVector<f64>) -> f64 {
    v.iter().fold(0.0_f64, |m, x| m.max(x.abs()))
}

/// Column most responsible for divergence: largest `|beta_j| * rms(x_j)`,
/// ignoring constant columns when any other column is present.
fn diverging_column(x: &DMatrix<f64>, beta: &DVector<f64>) -> usize {
    let n = x.nrows() as f64;
    let constant = |j: usize| {
        let c = x.column(j);
        c.iter().all(|&v| v == c[0])
    };
    let any_varying = (0..x.ncols()).any(|j| !constant(j));
    (0..x.ncols())
        .filter(|&j| !any_varying || !constant(j))
        .map(|j| (j, beta[j].abs() * x.column(j).norm() / n.sqrt()))
        .fold((0, f64::NEG_INFINITY), |best, cur| if cur.1 > best.1 { cur } else { best })
        .0
}

fn check_rank(x: &DMatrix<f64>) -> Result<()> {
    let k = x.ncols();
    let scales: Vec<f64> = (0..k).map(|j| x.column(j).norm()).collect();
    if let Some(j) = scales.iter().position(|&s| s == 0.0) {
        return Err(Error::SingularDesign(format!("column {j} is identically zero")));
    }
    let mut xs = x.clone();
    for (j, s) in scales.iter().enumerate() {
        xs.column_mut(j).scale_mut(1.0 / s);
    }
    let gram = xs.transpose() * &xs;
    let sv = gram.singular_values();
    let max = sv.max();
    let min = sv.min();
    if !(min > 1e-12 * max) {
        return Err(Error::SingularDesign(format!(
            "feature matrix is rank deficient (condition ratio {:.2e})",
            min / max
        )));
    }
    Ok(())
}

/// Fits `P(label = 1 | row) = expit(row · beta)`.
///
/// The caller supplies the intercept column if one is wanted. Each Newton
/// step is halved (up to `max_halvings` times) until the log-likelihood does
/// not decrease, so the recorded trace is monotone up to rounding.
pub fn fit_logistic(
    features: &DMatrix<f64>,
    labels: &[bool],
    opts: &IrlsOptions,
) -> Result<LogisticFit> {
    let (n, k) = features.shape();
    if n != labels.len() {
        return Err(Error::InvalidParameter(format!(
            "{n} feature rows but {} labels",
            labels.len()
        )));
    }
    if n == 0 || k == 0 {
        return Err(Error::NothingToFit("empty feature matrix".into()));
    }
    let ones = labels.iter().filter(|&&l| l).count();
    if ones == 0 || ones == n {
        return Err(Error::Separation {
            column: "0".into(),
            detail: format!("labels contain a single class ({ones} of {n} positive)"),
        });
    }
    check_rank(features)?;

    let mut beta = DVector::zeros(k);
    let (mut ll, mut p) = evaluate(features, labels, &beta);
    let mut trace = vec![ll];
    let mut iterations = 0;

    loop {
        let g = score(features, labels, &p);
        let g_norm = inf_norm(&g);
        if g_norm <= opts.score_tol {
            return Ok(LogisticFit {
                coefficients: beta.iter().copied().collect(),
                converged: true,
                iterations,
                score_norm: g_norm,
                loglik_trace: trace,
            });
        }
        let beta_norm = beta.amax();
        if beta_norm > opts.separation_cap {
            let column = diverging_column(features, &beta);
            return Err(Error::Separation {
                column: column.to_string(),
                detail: format!(
                    "|coefficient| = {:.1} exceeds {} with score {:.2e}",
                    beta_norm, opts.separation_cap, g_norm
                ),
            });
        }
        if iterations >= opts.max_iter {
            return Ok(LogisticFit {
                coefficients: beta.iter().copied().collect(),
                converged: false,
                iterations,
                score_norm: g_norm,
                loglik_trace: trace,
            });
        }

        // Fisher information X' W X.
        let mut info = DMatrix::<f64>::zeros(k, k);
        for (i, &pi) in p.iter().enumerate() {
            let w = pi * (1.0 - pi);
            let row = features.row(i);
            for a in 0..k {
                let wa = w * row[a];
                for b in a..k {
                    info[(a, b)] += wa * row[b];
                }
            }
        }
        for a in 0..k {
            for b in 0..a {
                info[(a, b)] = info[(b, a)];
            }
        }
        let step = match info.clone().cholesky() {
            Some(ch) => ch.solve(&g),
            None => {
                return Err(Error::Separation {
                    column: diverging_column(features, &beta).to_string(),
                    detail: "information matrix lost positive definiteness".into(),
                })
            }
        };

        iterations += 1;
        let slack = 1e-12 * (1.0 + ll.abs());
        let mut t = 1.0;
        let mut accepted = None;
        for _ in 0..=opts.max_halvings {
            let candidate = &beta + &step * t;
            let (ll_new, p_new) = evaluate(features, labels, &candidate);
            if ll_new.is_finite() && ll_new >= ll - slack {
                accepted = Some((candidate, ll_new, p_new));
                break;
            }
            t *= 0.5;
        }
        match accepted {
            Some((candidate, ll_new, p_new)) => {
                beta = candidate;
                p = p_new;
                ll = ll.max(ll_new);
                trace.push(ll_new);
            }
            None => {
                // No ascent direction left at machine precision.
                return Ok(LogisticFit {
                    coefficients: beta.iter().copied().collect(),
                    converged: false,
                    iterations,
                    score_norm: g_norm,
                    loglik_trace: trace,
                });
            }
        }
    }
}

#[cfg(test)]
mod tests {
    use super::*;

    fn matrix(rows: &[Vec<f64>]) -> DMatrix<f64> {
        let k = rows[0].len();
        DMatrix::from_row_iterator(rows.len(), k, rows.iter().flatten().copied())
    }

    #[test]
    fn intercept_only_balanced_labels() {
        let x = matrix(&vec![vec![1.0]; 10]);
        let y: Vec<bool> = (0..10).map(|i| i % 2 == 0).collect();
        let fit = fit_logistic(&x, &y, &IrlsOptions::default()).unwrap();
        assert!(fit.converged);
        assert_eq!(fit.coefficients[0], 0.0);
    }

    #[test]
    fn two_by_two_log_odds_ratio() {
        // (x, y) cell counts: n00=7, n01=3, n10=4, n11=9.
        let mut rows = Vec::new();
        let mut y = Vec::new();
        for (xv, yv, count) in [(0.0, false, 7), (0.0, true, 3), (1.0, false, 4), (1.0, true, 9)] {
            for _ in 0..count {
                rows.push(vec![1.0, xv]);
                y.push(yv);
            }
        }
        let fit = fit_logistic(&matrix(&rows), &y, &IrlsOptions::default()).unwrap();
        let oracle_slope = ((9.0 * 7.0) / (4.0 * 3.0_f64)).ln();
        let oracle_intercept = (3.0 / 7.0_f64).ln();
        assert!((fit.coefficients[1] - oracle_slope).abs() < 1e-9);
        assert!((fit.coefficients[0] - oracle_intercept).abs() < 1e-9);
    }

    #[test]
    fn one_class_is_separation() {
        let x = matrix(&vec![vec![1.0, 0.5]; 5]);
        let err = fit_logistic(&x, &[true; 5], &IrlsOptions::default()).unwrap_err();
        assert!(matches!(err, Error::Separation { .. }));
    }

    #[test]
    fn perfectly_separated_covariate_is_named() {
        let rows: Vec<Vec<f64>> = (0..20).map(|i| vec![1.0, i as f64]).collect();
        let y: Vec<bool> = (0..20).map(|i| i >= 10).collect();
        match fit_logistic(&matrix(&rows), &y, &IrlsOptions::default()).unwrap_err() {
            Error::Separation { column, .. } => assert_eq!(column, "1"),
            other => panic!("expected separation, got {other:?}"),
        }
    }

    #[test]
    fn collinear_columns_are_singular() {
        let rows: Vec<Vec<f64>> = (0..10).map(|i| vec![1.0, i as f64, 2.0 * i as f64]).collect();
        let y: Vec<bool> = (0..10).map(|i| i % 3 == 0).collect();
        assert!(matches!(
            fit_logistic(&matrix(&rows), &y, &IrlsOptions::default()),
            Err(Error::SingularDesign(_))
        ));
    }

    #[test]
    fn expit_is_stable() {
        assert_eq!(expit(0.0), 0.5);
        assert!(expit(-800.0) >= 0.0 && expit(800.0) <= 1.0);
        assert!((logit(expit(1.3)) - 1.3).abs() < 1e-12);
    }
}
