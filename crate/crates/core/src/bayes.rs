//! Bayesian parameter estimation with a Gaussian likelihood, a uniform prior
//! and Metropolis-Hastings sampling.

use nalgebra::DMatrix;
use rand::Rng;
use rand_distr::{Distribution, StandardNormal};
use serde::{Deserialize, Serialize};

use crate::error::{Error, Result};
use crate::model::Model;
use crate::sampling::ParameterSpace;
use crate::seeds;

pub struct InverseProblem<'a, M: Model + ?Sized> {
    pub model: &'a M,
    pub y_obs: Vec<f64>,
    /// Noise variance `σ_ε²` of the i.i.d. Gaussian observation error.
    pub noise_variance: f64,
    pub prior: ParameterSpace,
}

impl<'a, M: Model + ?Sized> InverseProblem<'a, M> {
    pub fn new(model: &'a M, y_obs: Vec<f64>, noise_variance: f64, prior: ParameterSpace) -> Result<Self> {
        prior.validate()?;
        if !(noise_variance > 0.0) || !noise_variance.is_finite() {
            return Err(Error::InvalidConfig(format!("noise variance {noise_variance} must be positive")));
        }
        if y_obs.len() != model.n_outputs() {
            return Err(Error::DimensionMismatch { expected: model.n_outputs(), found: y_obs.len() });
        }
        if prior.dim() != model.n_inputs() {
            return Err(Error::DimensionMismatch { expected: model.n_inputs(), found: prior.dim() });
        }
        Ok(Self { model, y_obs, noise_variance, prior })
    }

    /// `−½‖y_obs − y(μ)‖²/σ_ε² + log π₀(μ)`; `−∞` outside the prior box, where
    /// the model is not called.
    pub fn log_posterior(&self, mu: &[f64]) -> Result<f64> {
        if mu.len() != self.prior.dim() {
            return Err(Error::DimensionMismatch { expected: self.prior.dim(), found: mu.len() });
        }
        if !self.prior.contains(mu) {
            return Ok(f64::NEG_INFINITY);
        }
        Ok(self.log_likelihood(mu)? + self.log_prior_density())
    }

    pub fn log_likelihood(&self, mu: &[f64]) -> Result<f64> {
        let y = self.model.evaluate(mu).map_err(|e| match e {
            e @ Error::ModelFailure { .. } => e,
            other => Error::ModelFailure { mu: mu.to_vec(), message: other.to_string() },
        })?;
        if y.len() != self.y_obs.len() {
            return Err(Error::DimensionMismatch { expected: self.y_obs.len(), found: y.len() });
        }
        let ss: f64 = y.iter().zip(&self.y_obs).map(|(a, b)| (a - b).powi(2)).sum();
        Ok(-0.5 * ss / self.noise_variance)
    }

    fn log_prior_density(&self) -> f64 {
        -(0..self.prior.dim()).map(|i| self.prior.width(i).ln()).sum::<f64>()
    }
}

#[derive(Debug, Clone, PartialEq, Serialize, Deserialize)]
#[serde(rename_all = "kebab-case", tag = "kind")]
pub enum Proposal {
    /// Independent uniform draws over the prior box.
    IndependenceUniform,
    /// Gaussian random walk with per-dimension standard deviations.
    RandomWalk { step: Vec<f64> },
}

#[derive(Debug, Clone, PartialEq, Serialize, Deserialize)]
#[serde(default)]
pub struct McmcConfig {
    pub n_mc: usize,
    pub burn_in: usize,
    pub thin: usize,
    pub proposal: Proposal,
    pub seed: u64,
    /// Starting point; the prior box midpoint when absent.
    pub initial: Option<Vec<f64>>,
}

impl Default for McmcConfig {
    fn default() -> Self {
        Self { n_mc: 10_000, burn_in: 500, thin: 4, proposal: Proposal::IndependenceUniform, seed: 0, initial: None }
    }
}

impl McmcConfig {
    pub fn validate(&self, dim: usize) -> Result<()> {
        if self.burn_in >= self.n_mc {
            return Err(Error::InvalidConfig(format!("burn-in {} must be below N_MC {}", self.burn_in, self.n_mc)));
        }
        if self.thin == 0 {
            return Err(Error::InvalidConfig("thinning must be at least 1".into()));
        }
        if let Proposal::RandomWalk { step } = &self.proposal {
            if step.len() != dim {
                return Err(Error::DimensionMismatch { expected: dim, found: step.len() });
            }
            if step.iter().any(|s| !(*s > 0.0)) {
                return Err(Error::InvalidConfig("random-walk steps must be positive".into()));
            }
        }
        Ok(())
    }

    pub fn n_kept(&self) -> usize {
        (self.n_mc - self.burn_in) / self.thin
    }
}

#[derive(Debug, Clone, Serialize, Deserialize)]
pub struct Chain {
    /// State after each iteration, `N_MC × p`.
    pub samples: DMatrix<f64>,
    pub log_posterior: Vec<f64>,
    pub accepted: Vec<bool>,
    pub n_accepted: usize,
    /// Samples left after burn-in and thinning.
    pub kept: DMatrix<f64>,
}

impl Chain {
    pub fn acceptance_rate(&self) -> f64 {
        self.n_accepted as f64 / self.accepted.len() as f64
    }

    /// True when no proposal was ever accepted.
    pub fn is_stuck(&self) -> bool {
        self.n_accepted == 0
    }
}

/// `min(1, exp(proposed − current))` for a symmetric or independence-uniform proposal.
pub fn acceptance_probability(current: f64, proposed: f64) -> f64 {
    if proposed == f64::NEG_INFINITY {
        0.0
    } else if proposed >= current {
        1.0
    } else {
        (proposed - current).exp()
    }
}

pub fn metropolis_hastings<M: Model + ?Sized>(problem: &InverseProblem<M>, config: &McmcConfig) -> Result<Chain> {
    let p = problem.prior.dim();
    config.validate(p)?;
    let mut rng = seeds::stream(config.seed, "mcmc");
    let mut current = config.initial.clone().unwrap_or_else(|| problem.prior.midpoint());
    if !problem.prior.contains(&current) {
        return Err(Error::InvalidConfig(format!("initial point {current:?} lies outside the prior box")));
    }
    let mut lp = problem.log_posterior(&current)?;
    let mut samples = DMatrix::zeros(config.n_mc, p);
    let mut trace = Vec::with_capacity(config.n_mc);
    let mut accepted = Vec::with_capacity(config.n_mc);
    let mut n_accepted = 0;
    let mut proposed = vec![0.0; p];
    for it in 0..config.n_mc {
        match &config.proposal {
            Proposal::IndependenceUniform => {
                for (i, v) in proposed.iter_mut().enumerate() {
                    *v = problem.prior.lower[i] + rng.random::<f64>() * problem.prior.width(i);
                }
            }
            Proposal::RandomWalk { step } => {
                for (i, v) in proposed.iter_mut().enumerate() {
                    let z: f64 = StandardNormal.sample(&mut rng);
                    *v = current[i] + step[i] * z;
                }
            }
        }
        let u: f64 = rng.random();
        let lp_new = problem.log_posterior(&proposed)?;
        let accept = u < acceptance_probability(lp, lp_new);
        if accept {
            current.copy_from_slice(&proposed);
            lp = lp_new;
            n_accepted += 1;
        }
        samples.row_mut(it).copy_from_slice(&current);
        trace.push(lp);
        accepted.push(accept);
    }
    let kept_rows: Vec<usize> = (0..config.n_kept()).map(|j| config.burn_in + (j + 1) * config.thin - 1).collect();
    let kept = DMatrix::from_fn(kept_rows.len(), p, |i, j| samples[(kept_rows[i], j)]);
    Ok(Chain { samples, log_posterior: trace, accepted, n_accepted, kept })
}

/// Gaussian kernel density estimate on a regular grid. A zero bandwidth
/// (identical samples) is reported as a single grid point with unit mass.
#[derive(Debug, Clone, PartialEq, Serialize, Deserialize)]
pub struct Density {
    pub bandwidth: f64,
    pub grid: Vec<f64>,
    pub density: Vec<f64>,
}

#[derive(Debug, Clone, Serialize, Deserialize)]
pub struct ChainSummary {
    pub mean: Vec<f64>,
    pub std: Vec<f64>,
    pub covariance: DMatrix<f64>,
    pub q05: Vec<f64>,
    pub q50: Vec<f64>,
    pub q95: Vec<f64>,
    pub densities: Vec<Density>,
}

pub const KDE_POINTS: usize = 256;

/// Linear-interpolation quantile of sorted data.
fn quantile(sorted: &[f64], q: f64) -> f64 {
    let h = (sorted.len() - 1) as f64 * q;
    let lo = h.floor() as usize;
    let hi = (lo + 1).min(sorted.len() - 1);
    sorted[lo] + (h - lo as f64) * (sorted[hi] - sorted[lo])
}

fn silverman_kde(sorted: &[f64], std: f64) -> Density {
    let n = sorted.len() as f64;
    let iqr = quantile(sorted, 0.75) - quantile(sorted, 0.25);
    let spread = if iqr > 0.0 { std.min(iqr / 1.34) } else { std };
    let h = 0.9 * spread * n.powf(-0.2);
    if !(h > 0.0) {
        return Density { bandwidth: 0.0, grid: vec![sorted[0]], density: vec![1.0] };
    }
    let (lo, hi) = (sorted[0] - 4.0 * h, sorted[sorted.len() - 1] + 4.0 * h);
    let grid: Vec<f64> = (0..KDE_POINTS).map(|k| lo + (hi - lo) * k as f64 / (KDE_POINTS - 1) as f64).collect();
    let norm = 1.0 / (n * h * (2.0 * std::f64::consts::PI).sqrt());
    let density = grid
        .iter()
        .map(|x| norm * sorted.iter().map(|s| (-0.5 * ((x - s) / h).powi(2)).exp()).sum::<f64>())
        .collect();
    Density { bandwidth: h, grid, density }
}

pub fn chain_summary(kept: &DMatrix<f64>) -> Result<ChainSummary> {
    let (n, p) = kept.shape();
    if n == 0 {
        return Err(Error::DegenerateData("no kept samples to summarize".into()));
    }
    let mean: Vec<f64> = (0..p).map(|j| kept.column(j).sum() / n as f64).collect();
    let denom = if n > 1 { (n - 1) as f64 } else { 1.0 };
    let covariance = DMatrix::from_fn(p, p, |a, b| {
        (0..n).map(|i| (kept[(i, a)] - mean[a]) * (kept[(i, b)] - mean[b])).sum::<f64>() / denom
    });
    let std: Vec<f64> = (0..p).map(|j| covariance[(j, j)].sqrt()).collect();
    let mut summary = ChainSummary {
        mean,
        std: std.clone(),
        covariance,
        q05: Vec::with_capacity(p),
        q50: Vec::with_capacity(p),
        q95: Vec::with_capacity(p),
        densities: Vec::with_capacity(p),
    };
    for (j, s) in std.iter().enumerate() {
        let mut sorted: Vec<f64> = kept.column(j).iter().copied().collect();
        sorted.sort_by(f64::total_cmp);
        summary.q05.push(quantile(&sorted, 0.05));
        summary.q50.push(quantile(&sorted, 0.5));
        summary.q95.push(quantile(&sorted, 0.95));
        summary.densities.push(silverman_kde(&sorted, *s));
    }
    Ok(summary)
}
