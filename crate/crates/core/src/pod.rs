//! Proper orthogonal decomposition: reduced basis construction and projection.

use std::path::Path;

use nalgebra::DMatrix;
use serde::{Deserialize, Serialize};

use crate::container;
use crate::error::{Error, Result};

/// How many modes to keep.
#[derive(Debug, Clone, Copy, PartialEq, Serialize, Deserialize)]
#[serde(rename_all = "kebab-case")]
pub enum PodCriterion {
    /// Smallest `N` with `Σ_{i>N} σ_i² / Σ_i σ_i² ≤ ε²`.
    Energy(f64),
    Fixed(usize),
}

/// Orthonormal reduced basis `V` (N_h × N) and the full singular spectrum.
#[derive(Debug, Clone, PartialEq)]
pub struct ReducedBasis {
    pub v: DMatrix<f64>,
    pub singular_values: Vec<f64>,
    pub criterion: PodCriterion,
}

#[derive(Serialize, Deserialize)]
struct BasisMeta {
    singular_values: Vec<f64>,
    criterion: PodCriterion,
    n: usize,
}

/// Smallest rank whose discarded squared singular values are at most `eps²`
/// of the total. Values below round-off relative to `σ₁` count as zero.
pub fn energy_rank(singular_values: &[f64], eps: f64) -> usize {
    let Some(&first) = singular_values.first() else { return 0 };
    if first <= 0.0 {
        return 0;
    }
    let floor = first * singular_values.len().max(1) as f64 * f64::EPSILON;
    let energy: Vec<f64> = singular_values
        .iter()
        .map(|&s| if s > floor { s * s } else { 0.0 })
        .collect();
    let total: f64 = energy.iter().sum();
    let mut tail = total;
    for (n, e) in energy.iter().enumerate() {
        if tail <= eps * eps * total {
            return n;
        }
        tail -= e;
    }
    singular_values.len()
}

/// Thin SVD with singular values in non-increasing order and each left vector
/// flipped so that its largest-magnitude entry is positive. The matching right
/// vectors (rows of `vt`) are flipped along.
pub fn ordered_svd(a: &DMatrix<f64>) -> Result<(DMatrix<f64>, Vec<f64>, DMatrix<f64>)> {
    let svd = a.clone().svd(true, true);
    let (Some(u), Some(vt)) = (svd.u, svd.v_t) else {
        return Err(Error::LinearSolver("SVD did not converge".into()));
    };
    let sv = svd.singular_values;
    let mut order: Vec<usize> = (0..sv.len()).collect();
    order.sort_by(|&i, &j| sv[j].total_cmp(&sv[i]).then(i.cmp(&j)));
    let mut u_out = DMatrix::zeros(u.nrows(), order.len());
    let mut vt_out = DMatrix::zeros(order.len(), vt.ncols());
    let mut s_out = Vec::with_capacity(order.len());
    for (k, &i) in order.iter().enumerate() {
        let col = u.column(i);
        let pivot = col.iter().copied().fold(0.0f64, |m, x| if x.abs() > m.abs() { x } else { m });
        let sign = if pivot < 0.0 { -1.0 } else { 1.0 };
        u_out.set_column(k, &(col * sign));
        vt_out.set_row(k, &(vt.row(i) * sign));
        s_out.push(sv[i]);
    }
    Ok((u_out, s_out, vt_out))
}

impl ReducedBasis {
    pub fn build(snapshots: &DMatrix<f64>, criterion: PodCriterion) -> Result<Self> {
        if snapshots.is_empty() || snapshots.iter().all(|x| *x == 0.0) {
            return Err(Error::DegenerateData("snapshot matrix is zero".into()));
        }
        if snapshots.iter().any(|x| !x.is_finite()) {
            return Err(Error::DegenerateData("snapshot matrix has non-finite entries".into()));
        }
        let (u, singular_values, _) = ordered_svd(snapshots)?;
        let n = match criterion {
            PodCriterion::Energy(eps) => {
                if !(eps >= 0.0) {
                    return Err(Error::InvalidConfig(format!("POD tolerance {eps} must be non-negative")));
                }
                energy_rank(&singular_values, eps).max(1)
            }
            PodCriterion::Fixed(n) => {
                if n == 0 || n > singular_values.len() {
                    return Err(Error::InvalidConfig(format!(
                        "requested {n} modes, spectrum has {}",
                        singular_values.len()
                    )));
                }
                n
            }
        };
        Ok(Self { v: u.columns(0, n).into_owned(), singular_values, criterion })
    }

    pub fn n(&self) -> usize {
        self.v.ncols()
    }

    pub fn n_h(&self) -> usize {
        self.v.nrows()
    }

    /// `√(Σ_{i>N} σ_i²)`, the Frobenius projection error on the training snapshots.
    pub fn tail_energy(&self) -> f64 {
        self.singular_values[self.n()..].iter().map(|s| s * s).sum::<f64>().sqrt()
    }

    /// `Vᵀ data`.
    pub fn project(&self, data: &DMatrix<f64>) -> Result<DMatrix<f64>> {
        if data.nrows() != self.n_h() {
            return Err(Error::DimensionMismatch { expected: self.n_h(), found: data.nrows() });
        }
        Ok(self.v.tr_mul(data))
    }

    /// `V q`.
    pub fn reconstruct(&self, q: &DMatrix<f64>) -> Result<DMatrix<f64>> {
        if q.nrows() != self.n() {
            return Err(Error::DimensionMismatch { expected: self.n(), found: q.nrows() });
        }
        Ok(&self.v * q)
    }

    /// Writes `V` to `path` and the spectrum to `path` with a `.json` extension.
    pub fn write(&self, path: &Path) -> Result<()> {
        container::write_matrix(path, &self.v, 0.0)?;
        let meta = BasisMeta {
            singular_values: self.singular_values.clone(),
            criterion: self.criterion,
            n: self.n(),
        };
        container::write_json(&path.with_extension("json"), &meta)
    }

    pub fn read(path: &Path) -> Result<Self> {
        let (v, _) = container::read_matrix(path)?;
        let meta: BasisMeta = container::read_json(&path.with_extension("json"))?;
        if meta.n != v.ncols() {
            return Err(Error::CorruptContainer {
                path: path.to_path_buf(),
                reason: format!("sidecar declares {} modes, container has {}", meta.n, v.ncols()),
            });
        }
        Ok(Self { v, singular_values: meta.singular_values, criterion: meta.criterion })
    }
}

/// Snapshot matrix `[u(t¹;μ₁) … u(t^{N_t};μ₁) u(t¹;μ₂) …]` with its parameter samples.
#[derive(Debug, Clone, PartialEq)]
pub struct SnapshotSet {
    pub matrix: DMatrix<f64>,
    /// N_s × p.
    pub params: DMatrix<f64>,
    pub times: Vec<f64>,
}

impl SnapshotSet {
    pub fn from_trajectories(trajectories: &[DMatrix<f64>], params: DMatrix<f64>, times: Vec<f64>) -> Result<Self> {
        if trajectories.len() != params.nrows() {
            return Err(Error::DimensionMismatch { expected: params.nrows(), found: trajectories.len() });
        }
        let Some(first) = trajectories.first() else {
            return Err(Error::DegenerateData("no trajectories".into()));
        };
        let (n_h, n_t) = first.shape();
        if n_t != times.len() {
            return Err(Error::DimensionMismatch { expected: times.len(), found: n_t });
        }
        let mut matrix = DMatrix::zeros(n_h, n_t * trajectories.len());
        for (s, traj) in trajectories.iter().enumerate() {
            if traj.shape() != (n_h, n_t) {
                return Err(Error::DimensionMismatch { expected: n_h * n_t, found: traj.len() });
            }
            matrix.columns_mut(s * n_t, n_t).copy_from(traj);
        }
        Ok(Self { matrix, params, times })
    }

    pub fn n_samples(&self) -> usize {
        self.params.nrows()
    }

    pub fn n_steps(&self) -> usize {
        self.times.len()
    }

    /// Displacement history of sample `s`.
    pub fn trajectory(&self, s: usize) -> DMatrix<f64> {
        self.matrix.columns(s * self.n_steps(), self.n_steps()).into_owned()
    }

    /// Keeps the listed samples, in the given order.
    pub fn select(&self, samples: &[usize]) -> Self {
        let trajectories: Vec<DMatrix<f64>> = samples.iter().map(|&s| self.trajectory(s)).collect();
        let params = DMatrix::from_fn(samples.len(), self.params.ncols(), |i, j| self.params[(samples[i], j)]);
        Self::from_trajectories(&trajectories, params, self.times.clone()).expect("consistent selection")
    }
}

/// Reduced coefficients `q = Vᵀ u`, one column per (sample, time step), samples outermost.
#[derive(Debug, Clone, PartialEq)]
pub struct CoefficientTable {
    pub q: DMatrix<f64>,
    pub n_steps: usize,
    pub n_samples: usize,
}

impl CoefficientTable {
    pub fn new(q: DMatrix<f64>, n_steps: usize, n_samples: usize) -> Result<Self> {
        if q.ncols() != n_steps * n_samples {
            return Err(Error::DimensionMismatch { expected: n_steps * n_samples, found: q.ncols() });
        }
        Ok(Self { q, n_steps, n_samples })
    }

    pub fn from_snapshots(basis: &ReducedBasis, snapshots: &SnapshotSet) -> Result<Self> {
        Self::new(basis.project(&snapshots.matrix)?, snapshots.n_steps(), snapshots.n_samples())
    }

    pub fn column(&self, step: usize, sample: usize) -> usize {
        sample * self.n_steps + step
    }

    pub fn n(&self) -> usize {
        self.q.nrows()
    }

    /// The N_t × N_s matrix `Q_ℓ` of coefficient `l`.
    pub fn time_by_sample(&self, l: usize) -> DMatrix<f64> {
        DMatrix::from_fn(self.n_steps, self.n_samples, |n, s| self.q[(l, self.column(n, s))])
    }
}
