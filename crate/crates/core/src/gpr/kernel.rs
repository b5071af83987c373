//! Covariance functions and their derivatives with respect to log-hyperparameters.

use serde::{Deserialize, Serialize};

use crate::error::{Error, Result};

#[derive(Debug, Clone, Copy, PartialEq, Eq, Serialize, Deserialize)]
#[serde(rename_all = "kebab-case")]
pub enum KernelKind {
    Rbf,
    ArdRbf,
    /// `σ_f² (xᵀx' + c)^degree`, degree 1 to 3.
    Polynomial { degree: u32 },
}

/// A kernel with concrete hyperparameters.
#[derive(Debug, Clone, PartialEq, Serialize, Deserialize)]
pub struct Kernel {
    pub kind: KernelKind,
    pub dim: usize,
    pub sigma_f: f64,
    /// One entry for RBF, `dim` entries for ARD, empty for polynomial.
    pub lengths: Vec<f64>,
    /// Polynomial offset `c`.
    pub offset: f64,
}

impl Kernel {
    pub fn rbf(sigma_f: f64, length: f64, dim: usize) -> Self {
        Self { kind: KernelKind::Rbf, dim, sigma_f, lengths: vec![length], offset: 0.0 }
    }

    pub fn ard(sigma_f: f64, lengths: Vec<f64>) -> Self {
        Self { kind: KernelKind::ArdRbf, dim: lengths.len(), sigma_f, lengths, offset: 0.0 }
    }

    pub fn polynomial(sigma_f: f64, offset: f64, degree: u32, dim: usize) -> Self {
        Self { kind: KernelKind::Polynomial { degree }, dim, sigma_f, lengths: Vec::new(), offset }
    }

    pub fn validate(&self) -> Result<()> {
        if !(self.sigma_f > 0.0) || self.lengths.iter().any(|l| !(*l > 0.0)) || !(self.offset >= 0.0) {
            return Err(Error::InvalidConfig(format!("invalid kernel hyperparameters {self:?}")));
        }
        match self.kind {
            KernelKind::Rbf if self.lengths.len() != 1 => Err(Error::InvalidConfig("RBF needs one length scale".into())),
            KernelKind::ArdRbf if self.lengths.len() != self.dim => {
                Err(Error::DimensionMismatch { expected: self.dim, found: self.lengths.len() })
            }
            KernelKind::Polynomial { degree } if !(1..=3).contains(&degree) => {
                Err(Error::InvalidConfig(format!("polynomial degree {degree} not in 1..=3")))
            }
            _ => Ok(()),
        }
    }

    /// Number of log-hyperparameters.
    pub fn n_params(kind: KernelKind, dim: usize) -> usize {
        match kind {
            KernelKind::Rbf => 2,
            KernelKind::ArdRbf => 1 + dim,
            KernelKind::Polynomial { .. } => 2,
        }
    }

    /// `[log σ_f, log ℓ…]` or `[log σ_f, log c]`.
    pub fn log_params(&self) -> Vec<f64> {
        let mut out = vec![self.sigma_f.ln()];
        match self.kind {
            KernelKind::Polynomial { .. } => out.push(self.offset.ln()),
            _ => out.extend(self.lengths.iter().map(|l| l.ln())),
        }
        out
    }

    pub fn from_log_params(kind: KernelKind, dim: usize, theta: &[f64]) -> Self {
        let sigma_f = theta[0].exp();
        match kind {
            KernelKind::Rbf => Self::rbf(sigma_f, theta[1].exp(), dim),
            KernelKind::ArdRbf => Self::ard(sigma_f, theta[1..=dim].iter().map(|t| t.exp()).collect()),
            KernelKind::Polynomial { degree } => Self::polynomial(sigma_f, theta[1].exp(), degree, dim),
        }
    }

    pub fn eval(&self, x: &[f64], y: &[f64]) -> Result<f64> {
        if x.len() != self.dim || y.len() != self.dim {
            return Err(Error::DimensionMismatch { expected: self.dim, found: x.len().max(y.len()) });
        }
        Ok(self.eval_unchecked(x, y))
    }

    pub(crate) fn eval_unchecked(&self, x: &[f64], y: &[f64]) -> f64 {
        let s2 = self.sigma_f * self.sigma_f;
        match self.kind {
            KernelKind::Rbf => {
                let l = self.lengths[0];
                let r2: f64 = x.iter().zip(y).map(|(a, b)| (a - b) * (a - b)).sum();
                s2 * (-0.5 * r2 / (l * l)).exp()
            }
            KernelKind::ArdRbf => {
                let r2: f64 = x
                    .iter()
                    .zip(y)
                    .zip(&self.lengths)
                    .map(|((a, b), l)| (a - b) * (a - b) / (l * l))
                    .sum();
                s2 * (-0.5 * r2).exp()
            }
            KernelKind::Polynomial { degree } => {
                let dot: f64 = x.iter().zip(y).map(|(a, b)| a * b).sum();
                s2 * (dot + self.offset).powi(degree as i32)
            }
        }
    }

    /// Kernel value and its derivatives with respect to the log-hyperparameters.
    pub(crate) fn eval_with_grad(&self, x: &[f64], y: &[f64], grad: &mut [f64]) -> f64 {
        let s2 = self.sigma_f * self.sigma_f;
        match self.kind {
            KernelKind::Rbf => {
                let l2 = self.lengths[0] * self.lengths[0];
                let r2: f64 = x.iter().zip(y).map(|(a, b)| (a - b) * (a - b)).sum();
                let k = s2 * (-0.5 * r2 / l2).exp();
                grad[0] = 2.0 * k;
                grad[1] = k * r2 / l2;
                k
            }
            KernelKind::ArdRbf => {
                let mut r2 = 0.0;
                for (j, ((a, b), l)) in x.iter().zip(y).zip(&self.lengths).enumerate() {
                    let d = (a - b) * (a - b) / (l * l);
                    grad[1 + j] = d;
                    r2 += d;
                }
                let k = s2 * (-0.5 * r2).exp();
                grad[0] = 2.0 * k;
                for g in &mut grad[1..=self.dim] {
                    *g *= k;
                }
                k
            }
            KernelKind::Polynomial { degree } => {
                let dot: f64 = x.iter().zip(y).map(|(a, b)| a * b).sum();
                let base = dot + self.offset;
                let k = s2 * base.powi(degree as i32);
                grad[0] = 2.0 * k;
                grad[1] = s2 * degree as f64 * base.powi(degree as i32 - 1) * self.offset;
                k
            }
        }
    }

    /// Prior variance `k(x, x)`.
    pub fn diag(&self, x: &[f64]) -> f64 {
        self.eval_unchecked(x, x)
    }
}
