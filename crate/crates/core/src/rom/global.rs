//! Global POD-GPR: one GP per reduced coefficient over the joint input `(t, μ)`.

use nalgebra::{DMatrix, DVector};
use rayon::prelude::*;
use serde::{Deserialize, Serialize};

use super::{RomPrediction, TrainingDesign};
use crate::error::{Error, Result};
use crate::gpr::{train_gp, GpConfig, KernelKind, TrainedGp};
use crate::pod::{CoefficientTable, ReducedBasis};
use crate::seeds;

#[derive(Debug, Clone, Copy, PartialEq, Serialize, Deserialize)]
#[serde(default)]
pub struct GlobalConfig {
    pub gp: GpConfig,
    /// Keep every `stride`-th time step starting from the first, plus the last; 1 keeps every step.
    pub time_stride: usize,
}

impl Default for GlobalConfig {
    fn default() -> Self {
        Self { gp: GpConfig::default(), time_stride: 5 }
    }
}

#[derive(Debug, Clone)]
pub struct GlobalRom {
    pub basis: ReducedBasis,
    pub gps: Vec<TrainedGp>,
    pub design: TrainingDesign,
    /// Time steps (0-based) used for training.
    pub kept_steps: Vec<usize>,
}

/// Indices `0, stride, 2·stride, …` and `n_steps − 1`, so the kept grid spans the whole interval.
pub fn kept_steps(n_steps: usize, stride: usize) -> Vec<usize> {
    let mut kept: Vec<usize> = (0..n_steps).step_by(stride.max(1)).collect();
    if n_steps > 0 && kept.last() != Some(&(n_steps - 1)) {
        kept.push(n_steps - 1);
    }
    kept
}

/// The global design: column `s·T + k` holds `(t_k, μ_s)`, all kept times of
/// sample 1 first.
pub fn global_inputs(design: &TrainingDesign, kept: &[usize]) -> DMatrix<f64> {
    let p = design.n_params();
    let t_count = kept.len();
    let mut x = DMatrix::zeros(p + 1, design.params.len() * t_count);
    for (s, mu) in design.params.iter().enumerate() {
        for (k, &n) in kept.iter().enumerate() {
            let c = s * t_count + k;
            x[(0, c)] = design.times[n];
            for (i, v) in mu.iter().enumerate() {
                x[(i + 1, c)] = *v;
            }
        }
    }
    x
}

pub fn train_global_rom(
    basis: &ReducedBasis,
    table: &CoefficientTable,
    times: &[f64],
    params: &DMatrix<f64>,
    cfg: &GlobalConfig,
    seed: u64,
) -> Result<GlobalRom> {
    if table.n() != basis.n() {
        return Err(Error::DimensionMismatch { expected: basis.n(), found: table.n() });
    }
    let design = TrainingDesign::new(table, times, params)?;
    if cfg.time_stride == 0 {
        return Err(Error::InvalidConfig("time stride must be at least 1".into()));
    }
    let kept = kept_steps(times.len(), cfg.time_stride);
    let x = global_inputs(&design, &kept);
    let gps = (0..basis.n())
        .into_par_iter()
        .map(|l| {
            let y: Vec<f64> = (0..table.n_samples)
                .flat_map(|s| kept.iter().map(move |&n| (s, n)))
                .map(|(s, n)| table.q[(l, table.column(n, s))])
                .collect();
            train_gp(&x, &y, &cfg.gp, seeds::derive(seed, &format!("global/{l}")))
                .map_err(|e| e.context(format!("global GP for coefficient {}", l + 1)))
        })
        .collect::<Result<Vec<_>>>()?;
    Ok(GlobalRom { basis: basis.clone(), gps, design, kept_steps: kept })
}

impl GlobalRom {
    pub fn predict(&self, t: f64, mu: &[f64]) -> Result<RomPrediction> {
        let mut x = Vec::with_capacity(mu.len() + 1);
        x.push(t);
        x.extend_from_slice(mu);
        let mut mean = Vec::with_capacity(self.gps.len());
        let mut variance = Vec::with_capacity(self.gps.len());
        for gp in &self.gps {
            let (m, v) = gp.predict_point(&x)?;
            mean.push(m);
            variance.push(v);
        }
        Ok(RomPrediction { mean, variance, extrapolated: self.design.outside(t, mu) })
    }

    /// Coefficient means at every time in `times` for one `μ`.
    ///
    /// With a squared-exponential kernel the covariance factorizes into a time
    /// part and a parameter part, so on the sample-major training grid the
    /// posterior mean is `m + σ_f² Σ_s a_s Σ_k b_{qk} α_{sk}`; this needs only
    /// `N_s + |times|·T` exponentials per GP.
    pub fn predict_trajectory(&self, mu: &[f64], times: &[f64]) -> Result<DMatrix<f64>> {
        let p = self.design.n_params();
        if mu.len() != p {
            return Err(Error::DimensionMismatch { expected: p, found: mu.len() });
        }
        let mut out = DMatrix::zeros(self.gps.len(), times.len());
        for (l, gp) in self.gps.iter().enumerate() {
            match gp.kernel.kind {
                KernelKind::Rbf | KernelKind::ArdRbf => {
                    self.separable_mean(gp, mu, times, &mut out, l);
                }
                KernelKind::Polynomial { .. } => {
                    let mut x = vec![0.0; p + 1];
                    x[1..].copy_from_slice(mu);
                    for (q, &t) in times.iter().enumerate() {
                        x[0] = t;
                        out[(l, q)] = gp.predict_mean(&x)?;
                    }
                }
            }
        }
        Ok(out)
    }

    fn separable_mean(&self, gp: &TrainedGp, mu: &[f64], times: &[f64], out: &mut DMatrix<f64>, l: usize) {
        let p = mu.len();
        let length = |i: usize| if gp.kernel.lengths.len() == 1 { gp.kernel.lengths[0] } else { gp.kernel.lengths[i] };

        // Group α by distinct scaled time and distinct scaled parameter column.
        let mut time_nodes: Vec<f64> = Vec::new();
        let mut param_nodes: Vec<usize> = Vec::new();
        let mut entries = Vec::with_capacity(gp.x.ncols());
        for j in 0..gp.x.ncols() {
            let t = gp.x[(0, j)];
            let k = time_nodes.iter().position(|&v| v == t).unwrap_or_else(|| {
                time_nodes.push(t);
                time_nodes.len() - 1
            });
            let same = |c: usize| (1..=p).all(|i| gp.x[(i, c)] == gp.x[(i, j)]);
            let s = param_nodes.iter().position(|&c| same(c)).unwrap_or_else(|| {
                param_nodes.push(j);
                param_nodes.len() - 1
            });
            entries.push((s, k));
        }
        let mut w = DMatrix::zeros(param_nodes.len(), time_nodes.len());
        for (j, &(s, k)) in entries.iter().enumerate() {
            w[(s, k)] += gp.alpha[j];
        }

        let mut query = vec![0.0; p + 1];
        let mut scaled = vec![0.0; p + 1];
        query[1..].copy_from_slice(mu);
        gp.scale_input(&query, &mut scaled);
        let a = DVector::from_iterator(
            param_nodes.len(),
            param_nodes.iter().map(|&c| {
                let r2: f64 = (1..=p).map(|i| ((scaled[i] - gp.x[(i, c)]) / length(i)).powi(2)).sum();
                (-0.5 * r2).exp()
            }),
        );
        let wa = w.tr_mul(&a);
        let lt = length(0);
        let s2 = gp.kernel.sigma_f * gp.kernel.sigma_f;
        for (q, &t) in times.iter().enumerate() {
            query[0] = t;
            gp.scale_input(&query, &mut scaled);
            let acc: f64 = time_nodes
                .iter()
                .zip(wa.iter())
                .map(|(&tk, v)| (-0.5 * ((scaled[0] - tk) / lt).powi(2)).exp() * v)
                .sum();
            let mean = gp.prior_mean + s2 * acc;
            out[(l, q)] = match &gp.output_scaler {
                Some(sc) => sc.invert_value(0, mean),
                None => mean,
            };
        }
    }
}
