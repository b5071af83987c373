//! Coefficient-level (MSE, RSE) and field-level (tAE, tRE) error measures.

use nalgebra::DMatrix;
use serde::{Deserialize, Serialize};

use crate::error::{Error, Result};
use crate::pod::ReducedBasis;

#[derive(Debug, Clone, PartialEq, Serialize, Deserialize)]
pub struct CoefficientErrors {
    pub mse: Vec<f64>,
    /// `None` where the truth has zero variance.
    pub rse: Vec<Option<f64>>,
}

/// Per-row errors between true and predicted coefficient tables (N × M).
pub fn coefficient_errors(truth: &DMatrix<f64>, pred: &DMatrix<f64>) -> Result<CoefficientErrors> {
    if truth.shape() != pred.shape() {
        return Err(Error::DimensionMismatch { expected: truth.len(), found: pred.len() });
    }
    let m = truth.ncols() as f64;
    let mut mse = Vec::with_capacity(truth.nrows());
    let mut rse = Vec::with_capacity(truth.nrows());
    for l in 0..truth.nrows() {
        let t = truth.row(l);
        let sq: f64 = t.iter().zip(pred.row(l).iter()).map(|(a, b)| (a - b) * (a - b)).sum();
        let mean = t.sum() / m;
        let spread: f64 = t.iter().map(|a| (a - mean) * (a - mean)).sum();
        mse.push(sq / m);
        rse.push((spread > 0.0).then(|| sq / spread));
    }
    Ok(CoefficientErrors { mse, rse })
}

#[derive(Debug, Clone, PartialEq, Serialize, Deserialize)]
pub struct FieldErrors {
    /// Time-averaged absolute error per test sample.
    pub tae: Vec<f64>,
    /// Time-averaged relative error per test sample; `None` if some step has a zero true field.
    pub tre: Vec<Option<f64>>,
    pub mean_tae: f64,
    pub mean_tre: Option<f64>,
    /// Absolute error per time step, averaged over samples.
    pub abs_curve: Vec<f64>,
    /// Relative error per time step, averaged over samples with a nonzero field.
    pub rel_curve: Vec<Option<f64>>,
}

/// Euclidean-norm errors between true trajectories and their approximations (N_h × N_t each).
pub fn field_errors(truth: &[DMatrix<f64>], approx: &[DMatrix<f64>]) -> Result<FieldErrors> {
    if truth.len() != approx.len() || truth.is_empty() {
        return Err(Error::DimensionMismatch { expected: truth.len(), found: approx.len() });
    }
    let n_t = truth[0].ncols();
    let mut tae = Vec::with_capacity(truth.len());
    let mut tre = Vec::with_capacity(truth.len());
    let mut abs_sum = vec![0.0; n_t];
    let mut rel_sum = vec![0.0; n_t];
    let mut rel_count = vec![0usize; n_t];
    for (u, a) in truth.iter().zip(approx) {
        if u.shape() != a.shape() || u.ncols() != n_t {
            return Err(Error::DimensionMismatch { expected: u.len(), found: a.len() });
        }
        let mut abs_total = 0.0;
        let mut rel_total = Some(0.0);
        for n in 0..n_t {
            let err = (u.column(n) - a.column(n)).norm();
            let norm = u.column(n).norm();
            abs_total += err;
            abs_sum[n] += err;
            if norm > 0.0 {
                rel_sum[n] += err / norm;
                rel_count[n] += 1;
                rel_total = rel_total.map(|r| r + err / norm);
            } else {
                rel_total = None;
            }
        }
        tae.push(abs_total / n_t as f64);
        tre.push(rel_total.map(|r| r / n_t as f64));
    }
    let mean_tae = tae.iter().sum::<f64>() / tae.len() as f64;
    let valid: Vec<f64> = tre.iter().flatten().copied().collect();
    let mean_tre = (!valid.is_empty()).then(|| valid.iter().sum::<f64>() / valid.len() as f64);
    let s = truth.len() as f64;
    Ok(FieldErrors {
        tae,
        tre,
        mean_tae,
        mean_tre,
        abs_curve: abs_sum.iter().map(|v| v / s).collect(),
        rel_curve: rel_sum.iter().zip(&rel_count).map(|(v, c)| (*c > 0).then(|| v / *c as f64)).collect(),
    })
}

/// `V Vᵀ u` for each trajectory: the best approximation in the reduced space.
pub fn projections(basis: &ReducedBasis, truth: &[DMatrix<f64>]) -> Result<Vec<DMatrix<f64>>> {
    truth.iter().map(|u| basis.reconstruct(&basis.project(u)?)).collect()
}
