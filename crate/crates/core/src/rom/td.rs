//! Tensor-decomposition POD-GPR: per coefficient, a truncated SVD of the time ×
//! sample matrix with separate GPs for time modes and parameter modes.

use nalgebra::DMatrix;
use rayon::prelude::*;
use serde::{Deserialize, Serialize};

use super::{RomPrediction, TrainingDesign};
use crate::error::{Error, Result};
use crate::gpr::{train_gp, GpConfig, KernelKind, TrainedGp};
use crate::pod::{energy_rank, ordered_svd, CoefficientTable, ReducedBasis};
use crate::seeds;

#[derive(Debug, Clone, Copy, PartialEq, Serialize, Deserialize)]
#[serde(default)]
pub struct TdConfig {
    pub time_gp: GpConfig,
    pub param_gp: GpConfig,
    /// Energy tolerance of the per-coefficient truncated SVD.
    pub eps_svd: f64,
}

impl Default for TdConfig {
    fn default() -> Self {
        Self {
            time_gp: GpConfig { kernel: KernelKind::Rbf, ..GpConfig::default() },
            param_gp: GpConfig::default(),
            eps_svd: 1e-2,
        }
    }
}

#[derive(Debug, Clone)]
pub struct TdMode {
    pub lambda: f64,
    pub time_gp: TrainedGp,
    pub param_gp: TrainedGp,
}

#[derive(Debug, Clone)]
pub struct TdCoefficient {
    /// Full spectrum of `Q_ℓ`.
    pub singular_values: Vec<f64>,
    pub modes: Vec<TdMode>,
    /// Time-mode means at the training times, one row per mode.
    time_cache: DMatrix<f64>,
}

impl TdCoefficient {
    pub fn new(singular_values: Vec<f64>, modes: Vec<TdMode>, times: &[f64]) -> Result<Self> {
        let mut time_cache = DMatrix::zeros(modes.len(), times.len());
        for (k, mode) in modes.iter().enumerate() {
            for (n, &t) in times.iter().enumerate() {
                time_cache[(k, n)] = mode.time_gp.predict_mean(&[t])?;
            }
        }
        Ok(Self { singular_values, modes, time_cache })
    }

    pub fn rank(&self) -> usize {
        self.modes.len()
    }
}

#[derive(Debug, Clone)]
pub struct TdRom {
    pub basis: ReducedBasis,
    pub coefficients: Vec<TdCoefficient>,
    pub design: TrainingDesign,
    pub eps_svd: f64,
}

enum Factor {
    Time,
    Param,
}

pub fn train_td_rom(
    basis: &ReducedBasis,
    table: &CoefficientTable,
    times: &[f64],
    params: &DMatrix<f64>,
    cfg: &TdConfig,
    seed: u64,
) -> Result<TdRom> {
    if table.n() != basis.n() {
        return Err(Error::DimensionMismatch { expected: basis.n(), found: table.n() });
    }
    if !(cfg.eps_svd >= 0.0) {
        return Err(Error::InvalidConfig(format!("SVD tolerance {} must be non-negative", cfg.eps_svd)));
    }
    let design = TrainingDesign::new(table, times, params)?;
    let x_time = DMatrix::from_row_slice(1, times.len(), times);
    // Samples in lexicographic parameter order, so the decomposition does not
    // depend on the order they were supplied in.
    let mut order: Vec<usize> = (0..params.nrows()).collect();
    order.sort_by(|&a, &b| {
        params.row(a).iter().zip(params.row(b).iter()).map(|(p, q)| p.total_cmp(q)).find(|o| o.is_ne()).unwrap_or(a.cmp(&b))
    });
    let x_param = DMatrix::from_fn(params.ncols(), order.len(), |i, j| params[(order[j], i)]);

    let mut jobs = Vec::new();
    let mut factors = Vec::with_capacity(table.n());
    for l in 0..table.n() {
        let unordered = table.time_by_sample(l);
        let q = DMatrix::from_fn(unordered.nrows(), order.len(), |i, j| unordered[(i, order[j])]);
        let (u, sv, vt) = if q.iter().all(|v| *v == 0.0) {
            (DMatrix::zeros(q.nrows(), 0), vec![0.0; q.nrows().min(q.ncols())], DMatrix::zeros(0, q.ncols()))
        } else {
            ordered_svd(&q)?
        };
        let rank = energy_rank(&sv, cfg.eps_svd);
        for k in 0..rank {
            jobs.push((l, k, Factor::Time));
            jobs.push((l, k, Factor::Param));
        }
        factors.push((u, sv, vt, rank));
    }

    let trained = jobs
        .par_iter()
        .map(|(l, k, factor)| {
            let (u, _, vt, _) = &factors[*l];
            let (x, y, gp_cfg, name) = match factor {
                Factor::Time => (&x_time, u.column(*k).iter().copied().collect::<Vec<_>>(), &cfg.time_gp, "time"),
                Factor::Param => (&x_param, vt.row(*k).iter().copied().collect(), &cfg.param_gp, "parameter"),
            };
            train_gp(x, &y, gp_cfg, seeds::derive(seed, &format!("td/{l}/{k}/{name}")))
                .map_err(|e| e.context(format!("{name} GP for coefficient {}, mode {}", l + 1, k + 1)))
        })
        .collect::<Result<Vec<_>>>()?;

    let mut trained = trained.into_iter();
    let mut coefficients = Vec::with_capacity(table.n());
    for (_, sv, _, rank) in factors {
        let modes = (0..rank)
            .map(|k| TdMode {
                lambda: sv[k],
                time_gp: trained.next().expect("one time GP per mode"),
                param_gp: trained.next().expect("one parameter GP per mode"),
            })
            .collect();
        coefficients.push(TdCoefficient::new(sv, modes, times)?);
    }
    Ok(TdRom { basis: basis.clone(), coefficients, design, eps_svd: cfg.eps_svd })
}

impl TdRom {
    pub fn ranks(&self) -> Vec<usize> {
        self.coefficients.iter().map(TdCoefficient::rank).collect()
    }

    pub fn n_gps(&self) -> usize {
        2 * self.ranks().iter().sum::<usize>()
    }

    pub fn kernel_evaluations_per_query(&self) -> usize {
        self.coefficients
            .iter()
            .flat_map(|c| &c.modes)
            .map(|m| m.time_gp.n_train() + m.param_gp.n_train())
            .sum()
    }

    /// `q̂_ℓ = Σ_k λ_k ψ̂_k(t) φ̂_k(μ)` with first-order propagated variance
    /// `Σ_k λ_k² (ψ̂_k² var φ̂_k + φ̂_k² var ψ̂_k)`.
    pub fn predict(&self, t: f64, mu: &[f64]) -> Result<RomPrediction> {
        let mut mean = Vec::with_capacity(self.coefficients.len());
        let mut variance = Vec::with_capacity(self.coefficients.len());
        for c in &self.coefficients {
            let (mut m, mut v) = (0.0, 0.0);
            for mode in &c.modes {
                let (psi, psi_var) = mode.time_gp.predict_point(&[t])?;
                let (phi, phi_var) = mode.param_gp.predict_point(mu)?;
                m += mode.lambda * psi * phi;
                v += mode.lambda * mode.lambda * (psi * psi * phi_var + phi * phi * psi_var);
            }
            mean.push(m);
            variance.push(v);
        }
        Ok(RomPrediction { mean, variance, extrapolated: self.design.outside(t, mu) })
    }

    /// Coefficient means at every time in `times` for one `μ`. Time modes at the
    /// training times are precomputed.
    pub fn predict_trajectory(&self, mu: &[f64], times: &[f64]) -> Result<DMatrix<f64>> {
        let cached: Option<Vec<usize>> = times
            .iter()
            .map(|t| self.design.times.iter().position(|s| s == t))
            .collect();
        let mut out = DMatrix::zeros(self.coefficients.len(), times.len());
        for (l, c) in self.coefficients.iter().enumerate() {
            for (k, mode) in c.modes.iter().enumerate() {
                let w = mode.lambda * mode.param_gp.predict_mean(mu)?;
                for (q, &t) in times.iter().enumerate() {
                    let psi = match &cached {
                        Some(idx) => c.time_cache[(k, idx[q])],
                        None => mode.time_gp.predict_mean(&[t])?,
                    };
                    out[(l, q)] += w * psi;
                }
            }
        }
        Ok(out)
    }
}
