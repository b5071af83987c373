//! Saltelli sampling with Jansen estimators for first-order and total Sobol indices.

use nalgebra::DMatrix;
use rand::Rng;
use serde::{Deserialize, Serialize};

use crate::error::{Error, Result};
use crate::sampling::ParameterSpace;
use crate::seeds;

/// Base matrices `A`, `B` (`N × p`, physical units) and the cross matrices
/// `A_B^(i)` (A with column i taken from B), which are formed on demand.
#[derive(Debug, Clone, Serialize, Deserialize)]
pub struct SaltelliDesign {
    pub a: DMatrix<f64>,
    pub b: DMatrix<f64>,
    pub seed: u64,
}

impl SaltelliDesign {
    pub fn n_samples(&self) -> usize {
        self.a.nrows()
    }

    pub fn dim(&self) -> usize {
        self.a.ncols()
    }

    pub fn cross(&self, i: usize) -> DMatrix<f64> {
        let mut m = self.a.clone();
        m.set_column(i, &self.b.column(i));
        m
    }

    /// All evaluation points stacked as `[A; B; A_B^(1); …; A_B^(p)]`.
    pub fn rows(&self) -> DMatrix<f64> {
        let (n, p) = (self.n_samples(), self.dim());
        let mut out = DMatrix::zeros(n * (p + 2), p);
        out.rows_mut(0, n).copy_from(&self.a);
        out.rows_mut(n, n).copy_from(&self.b);
        for i in 0..p {
            out.rows_mut((i + 2) * n, n).copy_from(&self.cross(i));
        }
        out
    }
}

pub fn saltelli_design(space: &ParameterSpace, n_samples: usize, seed: u64) -> Result<SaltelliDesign> {
    space.validate()?;
    if n_samples < 2 {
        return Err(Error::InvalidConfig("Saltelli design needs at least two samples".into()));
    }
    let mut rng = seeds::stream(seed, "saltelli");
    let p = space.dim();
    let mut draw = || DMatrix::from_fn(n_samples, p, |_, j| space.lower[j] + rng.random::<f64>() * space.width(j));
    let a = draw();
    let b = draw();
    Ok(SaltelliDesign { a, b, seed })
}

/// Indices of one output.
#[derive(Debug, Clone, PartialEq, Serialize, Deserialize)]
pub struct SobolIndices {
    pub first: Vec<f64>,
    pub total: Vec<f64>,
    /// Monte Carlo standard errors of the two estimators.
    pub first_noise: Vec<f64>,
    pub total_noise: Vec<f64>,
    /// Total variance and the unnormalized numerators `V_i`, `V_Ti`.
    pub variance: f64,
    pub first_numerator: Vec<f64>,
    pub total_numerator: Vec<f64>,
}

#[derive(Debug, Clone, Serialize, Deserialize)]
pub struct SobolResult {
    pub outputs: Vec<SobolIndices>,
}

fn mean_and_se(terms: &[f64]) -> (f64, f64) {
    let n = terms.len() as f64;
    let m = terms.iter().sum::<f64>() / n;
    let var = terms.iter().map(|t| (t - m).powi(2)).sum::<f64>() / (n - 1.0);
    (m, (var / n).sqrt())
}

/// Jansen estimators. `outputs` has one row per row of [`SaltelliDesign::rows`]
/// and one column per quantity of interest.
pub fn sobol_indices(design: &SaltelliDesign, outputs: &DMatrix<f64>) -> Result<SobolResult> {
    let (n, p) = (design.n_samples(), design.dim());
    if outputs.nrows() != n * (p + 2) {
        return Err(Error::DimensionMismatch { expected: n * (p + 2), found: outputs.nrows() });
    }
    let mut result = Vec::with_capacity(outputs.ncols());
    for q in 0..outputs.ncols() {
        let col = outputs.column(q);
        let fa = &col.as_slice()[..n];
        let fb = &col.as_slice()[n..2 * n];
        let pooled: Vec<f64> = fa.iter().chain(fb).copied().collect();
        let mean = pooled.iter().sum::<f64>() / (2 * n) as f64;
        let variance = pooled.iter().map(|v| (v - mean).powi(2)).sum::<f64>() / (2 * n - 1) as f64;
        if !(variance > 0.0) {
            return Err(Error::DegenerateData(format!("output {q} has zero variance; Sobol indices are undefined")));
        }
        let mut idx = SobolIndices {
            first: Vec::with_capacity(p),
            total: Vec::with_capacity(p),
            first_noise: Vec::with_capacity(p),
            total_noise: Vec::with_capacity(p),
            variance,
            first_numerator: Vec::with_capacity(p),
            total_numerator: Vec::with_capacity(p),
        };
        for i in 0..p {
            let fab = &col.as_slice()[(i + 2) * n..(i + 3) * n];
            let first_terms: Vec<f64> = fb.iter().zip(fab).map(|(b, c)| 0.5 * (b - c).powi(2)).collect();
            let total_terms: Vec<f64> = fa.iter().zip(fab).map(|(a, c)| 0.5 * (a - c).powi(2)).collect();
            let (d_first, se_first) = mean_and_se(&first_terms);
            let (v_total, se_total) = mean_and_se(&total_terms);
            let v_first = variance - d_first;
            idx.first.push(v_first / variance);
            idx.total.push(v_total / variance);
            idx.first_noise.push(se_first / variance);
            idx.total_noise.push(se_total / variance);
            idx.first_numerator.push(v_first);
            idx.total_numerator.push(v_total);
        }
        result.push(idx);
    }
    Ok(SobolResult { outputs: result })
}

/// Cumulative time-integrated indices of one output; `None` while the
/// integrated variance is still zero.
#[derive(Debug, Clone, PartialEq, Serialize, Deserialize)]
pub struct IntegratedSobol {
    pub times: Vec<f64>,
    /// `first[k][i]`, `total[k][i]` for time index `k` and input `i`.
    pub first: Vec<Option<Vec<f64>>>,
    pub total: Vec<Option<Vec<f64>>>,
}

/// Ratios `∫₀ᵗ V_i dτ / ∫₀ᵗ Var dτ` by the trapezoidal rule over the step
/// results `per_step` (one [`SobolIndices`] per time in `times`). The state at
/// `τ = 0` is taken deterministic, so every integrand starts from zero.
pub fn time_integrated_sobol(times: &[f64], per_step: &[SobolIndices]) -> Result<IntegratedSobol> {
    if times.len() != per_step.len() {
        return Err(Error::DimensionMismatch { expected: times.len(), found: per_step.len() });
    }
    if times.is_empty() || times[0] <= 0.0 || times.windows(2).any(|w| w[1] <= w[0]) {
        return Err(Error::InvalidConfig("times must be positive and strictly increasing".into()));
    }
    let p = per_step[0].first.len();
    let mut cum_var = 0.0;
    let mut cum_first = vec![0.0; p];
    let mut cum_total = vec![0.0; p];
    let (mut prev_t, mut prev_var) = (0.0, 0.0);
    let mut prev_first = vec![0.0; p];
    let mut prev_total = vec![0.0; p];
    let mut out = IntegratedSobol { times: times.to_vec(), first: Vec::new(), total: Vec::new() };
    for (&t, s) in times.iter().zip(per_step) {
        if s.first_numerator.len() != p {
            return Err(Error::DimensionMismatch { expected: p, found: s.first_numerator.len() });
        }
        let h = 0.5 * (t - prev_t);
        cum_var += h * (prev_var + s.variance);
        for i in 0..p {
            cum_first[i] += h * (prev_first[i] + s.first_numerator[i]);
            cum_total[i] += h * (prev_total[i] + s.total_numerator[i]);
        }
        if cum_var > 0.0 {
            out.first.push(Some(cum_first.iter().map(|v| v / cum_var).collect()));
            out.total.push(Some(cum_total.iter().map(|v| v / cum_var).collect()));
        } else {
            out.first.push(None);
            out.total.push(None);
        }
        prev_t = t;
        prev_var = s.variance;
        prev_first.clone_from(&s.first_numerator);
        prev_total.clone_from(&s.total_numerator);
    }
    Ok(out)
}
