//! Plug-in sandwich variance of `beta(tau)`.
//!
//! The influence function of `theta = (beta0, beta)` is
//! `Sigma^{-1} psi` with
//! `psi = V_k3 V_k1^{-1} phi_k + V_g3 V_g2^{-1} phi_g - phi_beta`,
//! where `k` indexes the observance model (double-sampling `eta`, or `pi` for
//! the MAR variant) and `g` the propensity model. Terms for models that are
//! not estimated are dropped.

use nalgebra::{DMatrix, DVector};
use serde::{Deserialize, Serialize};

use super::density::DensityEstimates;
use crate::data::{Dataset, GSpec};
use crate::error::{Error, Result};
use crate::estimator::{ObservanceModel, Propensity, WqteFit};
use crate::models::{clip_probability, EtaModel, ProbabilityModel};

/// Which nuisance corrections enter `psi`.
#[derive(Debug, Clone, Copy, PartialEq, Eq)]
pub struct NuisanceTerms {
    pub observance: bool,
    pub propensity: bool,
}

impl Default for NuisanceTerms {
    fn default() -> Self {
        Self { observance: true, propensity: true }
    }
}

type Mat2 = [[f64; 2]; 2];

#[derive(Debug, Clone, PartialEq, Serialize, Deserialize)]
pub struct AsymptoticPieces {
    pub d0: Vec<f64>,
    pub d1: Vec<f64>,
    pub sigma: Vec<Mat2>,
    /// Mean score derivative of the observance model (rows), if estimated.
    pub v_k1: Option<Vec<Vec<f64>>>,
    /// Mean score derivative of the propensity model, if estimated.
    pub v_g2: Option<Vec<Vec<f64>>>,
    /// Per level, the 2 x dim derivative of the mean estimating function in the
    /// observance parameters.
    pub v_k3: Vec<Vec<Vec<f64>>>,
    pub v_g3: Vec<Vec<Vec<f64>>>,
    pub psi_cov: Vec<Mat2>,
    /// Variance of `beta(tau)` (already divided by n).
    pub variance: Vec<f64>,
    pub se: Vec<f64>,
}

/// `Sigma = [[D1 + D0, D1], [D1, D1]]`.
pub fn sigma_matrix(d0: f64, d1: f64) -> Mat2 {
    [[d1 + d0, d1], [d1, d1]]
}

/// `Sigma^{-1} e2 = (-1/D0, 1/D0 + 1/D1)`.
pub fn sigma_inv_e2(d0: f64, d1: f64) -> [f64; 2] {
    [-1.0 / d0, 1.0 / d0 + 1.0 / d1]
}

fn rows(m: &DMatrix<f64>) -> Vec<Vec<f64>> {
    (0..m.nrows()).map(|i| m.row(i).iter().copied().collect()).collect()
}

/// Score contributions and the per-record observance-factor gradient of one
/// nuisance model.
struct NuisanceBlock {
    /// n x dim score contributions.
    phi: DMatrix<f64>,
    /// Mean score derivative.
    v: DMatrix<f64>,
    /// n x dim derivative of omega_i in the model parameters.
    d_omega: DMatrix<f64>,
}

impl NuisanceBlock {
    fn new(n: usize, dim: usize) -> Self {
        Self {
            phi: DMatrix::zeros(n, dim),
            v: DMatrix::zeros(dim, dim),
            d_omega: DMatrix::zeros(n, dim),
        }
    }

    fn add_info(&mut self, w: f64, u: &[f64]) {
        for a in 0..u.len() {
            for b in 0..u.len() {
                self.v[(a, b)] -= w * u[a] * u[b];
            }
        }
    }

    /// `V3(tau) V^{-1}` for every level, given `ind[k][i] = 1{y < theta} - tau`.
    fn projections(&self, z: &[f64], ind: &[Vec<f64>], v_inv: &DMatrix<f64>) -> (Vec<DMatrix<f64>>, Vec<DMatrix<f64>>) {
        let n = z.len() as f64;
        let dim = self.v.nrows();
        let mut v3s = Vec::with_capacity(ind.len());
        let mut projs = Vec::with_capacity(ind.len());
        for ind_k in ind {
            let mut v3 = DMatrix::zeros(2, dim);
            for (i, &c) in ind_k.iter().enumerate() {
                if c == 0.0 {
                    continue;
                }
                for j in 0..dim {
                    let t = c * self.d_omega[(i, j)];
                    v3[(0, j)] += t;
                    v3[(1, j)] += z[i] * t;
                }
            }
            v3 /= n;
            projs.push(&v3 * v_inv);
            v3s.push(v3);
        }
        (v3s, projs)
    }
}

fn invert_information(v: &DMatrix<f64>, what: &str) -> Result<DMatrix<f64>> {
    let neg = -v.clone();
    let ch = neg.cholesky().ok_or_else(|| {
        Error::SingularDesign(format!("{what} information matrix is not negative definite"))
    })?;
    Ok(-ch.inverse())
}

fn observance_block(d: &Dataset, fit: &WqteFit, model: &ObservanceModel) -> Result<NuisanceBlock> {
    let n = d.len();
    let comps = &fit.weights.components;
    match model {
        ObservanceModel::DoubleSampling(eta) => {
            let m = eta.as_model();
            let dim = m.n_params();
            let mut block = NuisanceBlock::new(n, dim);
            for (i, rec) in d.records.iter().enumerate() {
                if rec.r {
                    continue;
                }
                let u = m.gradient_features(rec.z, &rec.x);
                let raw = m.probability(rec.z, &rec.x).ok_or_else(|| {
                    Error::Positivity(format!("record {i}: no double-sampling probability"))
                })?;
                let census = matches!(eta, EtaModel::Strata(_)) && raw == 1.0;
                let p = if census { 1.0 } else { clip_probability(raw) };
                let s = f64::from(u8::from(rec.s));
                for (j, &uj) in u.iter().enumerate() {
                    block.phi[(i, j)] = (s - p) * uj;
                    if rec.s {
                        block.d_omega[(i, j)] = -comps[i].w_g * (1.0 - p) / p * uj;
                    }
                }
                block.add_info(p * (1.0 - p), &u);
            }
            block.v /= n as f64;
            Ok(block)
        }
        ObservanceModel::Mar(pi) => {
            let dim = pi.n_params();
            let mut block = NuisanceBlock::new(n, dim);
            for (i, rec) in d.records.iter().enumerate() {
                let u = pi.gradient_features(rec.z, &rec.x);
                let p = clip_probability(pi.probability(rec.z, &rec.x).expect("logistic model is total"));
                let r = f64::from(u8::from(rec.r));
                for (j, &uj) in u.iter().enumerate() {
                    block.phi[(i, j)] = (r - p) * uj;
                    if rec.r {
                        block.d_omega[(i, j)] = -comps[i].w_g * (1.0 - p) / p * uj;
                    }
                }
                block.add_info(p * (1.0 - p), &u);
            }
            block.v /= n as f64;
            Ok(block)
        }
    }
}

/// `dW^g/de` at `(z, e)`.
pub fn balancing_weight_derivative(g: GSpec, e: f64, z: bool) -> f64 {
    let gv = g.value(e);
    let dg = g.derivative();
    if z {
        dg / e - gv / (e * e)
    } else {
        dg / (1.0 - e) + gv / ((1.0 - e) * (1.0 - e))
    }
}

fn propensity_block(d: &Dataset, fit: &WqteFit, model: &dyn ProbabilityModel) -> NuisanceBlock {
    let n = d.len();
    let dim = model.n_params();
    let comps = &fit.weights.components;
    let mut block = NuisanceBlock::new(n, dim);
    for (i, rec) in d.records.iter().enumerate() {
        let v = model.gradient_features(false, &rec.x);
        let e = comps[i].e;
        let z = f64::from(u8::from(rec.z));
        let dw = comps[i].observance_factor * balancing_weight_derivative(fit.g, e, rec.z) * e * (1.0 - e);
        for (j, &vj) in v.iter().enumerate() {
            block.phi[(i, j)] = (z - e) * vj;
            block.d_omega[(i, j)] = dw * vj;
        }
        block.add_info(e * (1.0 - e), &v);
    }
    block.v /= n as f64;
    block
}

/// Sandwich variance with every estimated nuisance model accounted for.
pub fn asymptotic_variance(
    d: &Dataset,
    fit: &WqteFit,
    nuisances: &crate::estimator::Nuisances,
    densities: &DensityEstimates,
) -> Result<AsymptoticPieces> {
    asymptotic_variance_with(d, fit, nuisances, densities, NuisanceTerms::default())
}

/// Sandwich variance with a choice of which nuisance corrections to include.
pub fn asymptotic_variance_with(
    d: &Dataset,
    fit: &WqteFit,
    nuisances: &crate::estimator::Nuisances,
    densities: &DensityEstimates,
    terms: NuisanceTerms,
) -> Result<AsymptoticPieces> {
    let n = d.len();
    if fit.n != n || fit.weights.components.len() != n {
        return Err(Error::InvalidParameter(
            "fit and its weight components must come from this dataset".into(),
        ));
    }
    let kk = fit.grid.len();
    if densities.d0.len() != kk || densities.d1.len() != kk {
        return Err(Error::InvalidParameter("density estimates do not match the grid".into()));
    }

    // Scale-free singularity check: probability mass within one bandwidth.
    let shares = [fit.arms[0].total() / n as f64, fit.arms[1].total() / n as f64];
    for (k, &tau) in fit.grid.taus().iter().enumerate() {
        let (d0, d1) = (densities.d0[k], densities.d1[k]);
        let mass0 = d0 * densities.bandwidth[0] / shares[0];
        let mass1 = d1 * densities.bandwidth[1] / shares[1];
        if !(d0.is_finite() && d1.is_finite() && mass0 > 1e-8 && mass1 > 1e-8) {
            return Err(Error::SingularSigma { tau, d0, d1 });
        }
    }

    let z: Vec<f64> = d.records.iter().map(|r| f64::from(u8::from(r.z))).collect();
    // ind[k][i] = 1{y_i < theta_{z_i}} - tau for weighted records, else 0.
    let mut ind = vec![vec![0.0; n]; kk];
    for (k, &tau) in fit.grid.taus().iter().enumerate() {
        for (zi, arm) in fit.arms.iter().enumerate() {
            let theta = fit.arm_quantile(zi, k);
            for (&i, &y) in arm.index.iter().zip(&arm.y) {
                ind[k][i] = f64::from(u8::from(y < theta)) - tau;
            }
        }
    }

    let obs = match (&nuisances.observance, terms.observance) {
        (Some(m), true) => Some(observance_block(d, fit, m)?),
        _ => None,
    };
    let prop = match (&nuisances.propensity, terms.propensity) {
        (Propensity::Fitted(m), true) => Some(propensity_block(d, fit, m)),
        _ => None,
    };
    // A model with no free parameters (every stratum a census) contributes nothing.
    let obs = obs.filter(|b| b.v.nrows() > 0);

    let mut v_k3 = Vec::new();
    let mut obs_proj = Vec::new();
    if let Some(b) = &obs {
        let inv = invert_information(&b.v, "observance model")?;
        let (v3, p) = b.projections(&z, &ind, &inv);
        v_k3 = v3.iter().map(rows).collect();
        obs_proj = p;
    }
    let mut v_g3 = Vec::new();
    let mut prop_proj = Vec::new();
    if let Some(b) = &prop {
        let inv = invert_information(&b.v, "propensity model")?;
        let (v3, p) = b.projections(&z, &ind, &inv);
        v_g3 = v3.iter().map(rows).collect();
        prop_proj = p;
    }

    let mut sigma = Vec::with_capacity(kk);
    let mut psi_cov = Vec::with_capacity(kk);
    let mut variance = Vec::with_capacity(kk);
    for k in 0..kk {
        let (d0, d1) = (densities.d0[k], densities.d1[k]);
        sigma.push(sigma_matrix(d0, d1));
        let mut psi = DMatrix::<f64>::zeros(n, 2);
        for i in 0..n {
            let phi_beta = fit.weights.omega[i] * ind[k][i];
            psi[(i, 0)] = -phi_beta;
            psi[(i, 1)] = -z[i] * phi_beta;
        }
        if let Some(b) = &obs {
            psi += &b.phi * obs_proj[k].transpose();
        }
        if let Some(b) = &prop {
            psi += &b.phi * prop_proj[k].transpose();
        }
        let mean: DVector<f64> = psi.row_mean().transpose();
        let mut cov = [[0.0; 2]; 2];
        for i in 0..n {
            let c = [psi[(i, 0)] - mean[0], psi[(i, 1)] - mean[1]];
            for a in 0..2 {
                for b in 0..2 {
                    cov[a][b] += c[a] * c[b];
                }
            }
        }
        for row in cov.iter_mut() {
            for v in row.iter_mut() {
                *v /= n as f64;
            }
        }
        let h = sigma_inv_e2(d0, d1);
        let q = h[0] * h[0] * cov[0][0] + 2.0 * h[0] * h[1] * cov[0][1] + h[1] * h[1] * cov[1][1];
        psi_cov.push(cov);
        variance.push(q / n as f64);
    }
    let se = variance.iter().map(|v| v.sqrt()).collect();
    Ok(AsymptoticPieces {
        d0: densities.d0.clone(),
        d1: densities.d1.clone(),
        sigma,
        v_k1: obs.as_ref().map(|b| rows(&b.v)),
        v_g2: prop.as_ref().map(|b| rows(&b.v)),
        v_k3,
        v_g3,
        psi_cov,
        variance,
        se,
    })
}
