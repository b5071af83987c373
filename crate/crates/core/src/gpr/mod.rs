//! Single-output Gaussian process regression with marginal-likelihood training.

pub mod kernel;
pub mod likelihood;
pub mod optimize;

use std::path::Path;

use nalgebra::{Cholesky, DMatrix, DVector, Dyn};
use rand::Rng;
use serde::{Deserialize, Serialize};

use crate::container;
use crate::error::{Error, Result};
use crate::sampling::{Scaler, ScalerKind};
use crate::seeds;
pub use kernel::{Kernel, KernelKind};
pub use optimize::OptimizerConfig;

/// Box on every log-hyperparameter.
pub const LOG_BOUND: f64 = 8.0;
/// Smallest learned noise standard deviation.
pub const NOISE_FLOOR: f64 = 1e-10;

#[derive(Debug, Clone, Copy, PartialEq, Serialize, Deserialize)]
#[serde(rename_all = "kebab-case")]
pub enum NoiseMode {
    Learned,
    Fixed(f64),
}

#[derive(Debug, Clone, Copy, PartialEq, Serialize, Deserialize)]
#[serde(default)]
pub struct GpConfig {
    pub kernel: KernelKind,
    pub noise: NoiseMode,
    pub n_starts: usize,
    pub optimizer: OptimizerConfig,
    pub input_scaler: Option<ScalerKind>,
    pub output_scaler: Option<ScalerKind>,
}

impl Default for GpConfig {
    fn default() -> Self {
        Self {
            kernel: KernelKind::ArdRbf,
            noise: NoiseMode::Learned,
            n_starts: 5,
            optimizer: OptimizerConfig::default(),
            input_scaler: Some(ScalerKind::Standardize),
            output_scaler: Some(ScalerKind::Standardize),
        }
    }
}

/// A GP conditioned on its training data, ready for prediction.
#[derive(Debug, Clone)]
pub struct TrainedGp {
    pub kernel: Kernel,
    pub noise_std: f64,
    pub prior_mean: f64,
    pub jitter: f64,
    pub log_likelihood: f64,
    pub input_scaler: Option<Scaler>,
    pub output_scaler: Option<Scaler>,
    /// Scaled training inputs, d × n.
    pub x: DMatrix<f64>,
    pub alpha: DVector<f64>,
    chol: Cholesky<f64, Dyn>,
}

#[derive(Serialize, Deserialize)]
struct GpRecord {
    kernel: Kernel,
    noise_std: f64,
    prior_mean: f64,
    jitter: f64,
    log_likelihood: f64,
    input_scaler: Option<Scaler>,
    output_scaler: Option<Scaler>,
}

fn check_inputs(x: &DMatrix<f64>, y: &[f64]) -> Result<()> {
    if x.ncols() == 0 {
        return Err(Error::DegenerateData("no training points".into()));
    }
    if y.len() != x.ncols() {
        return Err(Error::DimensionMismatch { expected: x.ncols(), found: y.len() });
    }
    if x.iter().chain(y).any(|v| !v.is_finite()) {
        return Err(Error::DegenerateData("non-finite training data".into()));
    }
    Ok(())
}

impl TrainedGp {
    /// Conditions a GP with fixed hyperparameters on already-scaled data.
    pub fn condition(
        kernel: Kernel,
        noise_std: f64,
        x: DMatrix<f64>,
        y: &[f64],
        prior_mean: f64,
        input_scaler: Option<Scaler>,
        output_scaler: Option<Scaler>,
    ) -> Result<Self> {
        check_inputs(&x, y)?;
        kernel.validate()?;
        if x.nrows() != kernel.dim {
            return Err(Error::DimensionMismatch { expected: kernel.dim, found: x.nrows() });
        }
        let k = likelihood::covariance(&kernel, &x);
        let (chol, jitter) = likelihood::factorize(&k, noise_std * noise_std)?;
        let r = DVector::from_iterator(y.len(), y.iter().map(|v| v - prior_mean));
        let alpha = chol.solve(&r);
        let log_det: f64 = 2.0 * chol.l_dirty().diagonal().iter().map(|d| d.ln()).sum::<f64>();
        let n = y.len() as f64;
        let log_likelihood = -0.5 * r.dot(&alpha) - 0.5 * log_det - 0.5 * n * (2.0 * std::f64::consts::PI).ln();
        Ok(Self { kernel, noise_std, prior_mean, jitter, log_likelihood, input_scaler, output_scaler, x, alpha, chol })
    }

    pub fn dim(&self) -> usize {
        self.kernel.dim
    }

    pub fn n_train(&self) -> usize {
        self.x.ncols()
    }

    pub(crate) fn scale_input(&self, x: &[f64], out: &mut [f64]) {
        match &self.input_scaler {
            Some(s) => s.apply_point(x, out),
            None => out.copy_from_slice(x),
        }
    }

    fn unscale(&self, mean: f64, var: f64) -> (f64, f64) {
        match &self.output_scaler {
            Some(s) => (s.invert_value(0, mean), s.invert_variance(0, var)),
            None => (mean, var),
        }
    }

    /// Posterior mean in physical units, without the variance.
    pub fn predict_mean(&self, x: &[f64]) -> Result<f64> {
        if x.len() != self.dim() {
            return Err(Error::DimensionMismatch { expected: self.dim(), found: x.len() });
        }
        let mut xs = vec![0.0; x.len()];
        self.scale_input(x, &mut xs);
        let mut m = self.prior_mean;
        for (j, a) in self.alpha.iter().enumerate() {
            m += a * self.kernel.eval_unchecked(&xs, self.x.column(j).as_slice());
        }
        Ok(self.unscale(m, 0.0).0)
    }

    /// Posterior mean and latent variance at one physical input.
    pub fn predict_point(&self, x: &[f64]) -> Result<(f64, f64)> {
        if x.len() != self.dim() {
            return Err(Error::DimensionMismatch { expected: self.dim(), found: x.len() });
        }
        let mut xs = vec![0.0; x.len()];
        self.scale_input(x, &mut xs);
        let kstar = DVector::from_iterator(
            self.n_train(),
            (0..self.n_train()).map(|j| self.kernel.eval_unchecked(&xs, self.x.column(j).as_slice())),
        );
        let mean = self.prior_mean + kstar.dot(&self.alpha);
        let v = self
            .chol
            .l_dirty()
            .solve_lower_triangular(&kstar)
            .expect("Cholesky factor has a positive diagonal");
        let var = (self.kernel.diag(&xs) - v.norm_squared()).max(0.0);
        Ok(self.unscale(mean, var))
    }

    /// Means and variances at the columns of `x` (d × m).
    pub fn predict(&self, x: &DMatrix<f64>) -> Result<(Vec<f64>, Vec<f64>)> {
        if x.nrows() != self.dim() {
            return Err(Error::DimensionMismatch { expected: self.dim(), found: x.nrows() });
        }
        let mut means = Vec::with_capacity(x.ncols());
        let mut vars = Vec::with_capacity(x.ncols());
        for c in x.column_iter() {
            let (m, v) = self.predict_point(c.as_slice())?;
            means.push(m);
            vars.push(v);
        }
        Ok((means, vars))
    }

    /// Writes hyperparameters and scalers as JSON at `path` and the scaled
    /// inputs stacked over `α` in a container next to it (`.bin`).
    pub fn write(&self, path: &Path) -> Result<()> {
        let record = GpRecord {
            kernel: self.kernel.clone(),
            noise_std: self.noise_std,
            prior_mean: self.prior_mean,
            jitter: self.jitter,
            log_likelihood: self.log_likelihood,
            input_scaler: self.input_scaler.clone(),
            output_scaler: self.output_scaler.clone(),
        };
        container::write_json(path, &record)?;
        let mut blob = self.x.clone().insert_row(self.dim(), 0.0);
        blob.row_mut(self.dim()).copy_from(&self.alpha.transpose());
        container::write_matrix(&path.with_extension("bin"), &blob, 0.0)
    }

    pub fn read(path: &Path) -> Result<Self> {
        let record: GpRecord = container::read_json(path)?;
        let bin = path.with_extension("bin");
        let (blob, _) = container::read_matrix(&bin)?;
        let d = record.kernel.dim;
        if blob.nrows() != d + 1 {
            return Err(Error::CorruptContainer { path: bin, reason: format!("expected {} rows", d + 1) });
        }
        let x = blob.rows(0, d).into_owned();
        let alpha = blob.row(d).transpose();
        let mut k = likelihood::covariance(&record.kernel, &x);
        for i in 0..k.nrows() {
            k[(i, i)] += record.noise_std * record.noise_std + record.jitter;
        }
        let chol = Cholesky::new(k).ok_or(Error::IllConditionedKernel { jitter: record.jitter })?;
        Ok(Self {
            kernel: record.kernel,
            noise_std: record.noise_std,
            prior_mean: record.prior_mean,
            jitter: record.jitter,
            log_likelihood: record.log_likelihood,
            input_scaler: record.input_scaler,
            output_scaler: record.output_scaler,
            x,
            alpha,
            chol,
        })
    }
}

fn fit_scaler(kind: Option<ScalerKind>, data: &DMatrix<f64>) -> Result<Option<Scaler>> {
    kind.map(|k| Scaler::fit_or_center(k, data)).transpose()
}

/// Trains a GP on physical inputs `x` (d × n) and labels `y` by maximizing the
/// log marginal likelihood from several seeded starting points.
/// Training pairs sorted lexicographically by input, then label, so the fit
/// does not depend on the order the pairs were supplied in.
fn canonical_order(x: &DMatrix<f64>, y: &[f64]) -> (DMatrix<f64>, Vec<f64>) {
    let mut order: Vec<usize> = (0..y.len()).collect();
    order.sort_by(|&a, &b| {
        x.column(a)
            .iter()
            .zip(x.column(b).iter())
            .map(|(p, q)| p.total_cmp(q))
            .find(|o| o.is_ne())
            .unwrap_or_else(|| y[a].total_cmp(&y[b]))
    });
    let xs = DMatrix::from_fn(x.nrows(), y.len(), |i, j| x[(i, order[j])]);
    let ys = order.iter().map(|&j| y[j]).collect();
    (xs, ys)
}

pub fn train_gp(x: &DMatrix<f64>, y: &[f64], cfg: &GpConfig, seed: u64) -> Result<TrainedGp> {
    check_inputs(x, y)?;
    let (x, y) = &canonical_order(x, y);
    let d = x.nrows();
    let n = y.len();
    let learned = matches!(cfg.noise, NoiseMode::Learned);
    if learned && n < 2 {
        return Err(Error::InvalidConfig("learning the noise needs at least two points".into()));
    }
    if let KernelKind::Polynomial { degree } = cfg.kernel {
        if !(1..=3).contains(&degree) {
            return Err(Error::InvalidConfig(format!("polynomial degree {degree} not in 1..=3")));
        }
    }
    let input_scaler = fit_scaler(cfg.input_scaler, x)?;
    let ymat = DMatrix::from_row_slice(1, n, y);
    let output_scaler = fit_scaler(cfg.output_scaler, &ymat)?;
    let xs = match &input_scaler {
        Some(s) => s.apply(x)?,
        None => x.clone(),
    };
    let ys: Vec<f64> = match &output_scaler {
        Some(s) => s.apply(&ymat)?.iter().copied().collect(),
        None => y.to_vec(),
    };
    let prior_mean = ys.iter().sum::<f64>() / n as f64;

    let n_kernel = Kernel::n_params(cfg.kernel, d);
    let n_theta = n_kernel + usize::from(learned);
    let mut lower = vec![-LOG_BOUND; n_theta];
    let upper = vec![LOG_BOUND; n_theta];
    if learned {
        lower[n_kernel] = NOISE_FLOOR.ln();
    }
    let fixed_noise = match cfg.noise {
        NoiseMode::Fixed(s) if s >= 0.0 => s,
        NoiseMode::Fixed(s) => return Err(Error::InvalidConfig(format!("noise std {s} is negative"))),
        NoiseMode::Learned => 0.0,
    };

    let objective = |theta: &[f64]| -> Option<(f64, Vec<f64>)> {
        let kernel = Kernel::from_log_params(cfg.kernel, d, &theta[..n_kernel]);
        let noise = if learned { theta[n_kernel].exp() } else { fixed_noise };
        let (v, mut g) = likelihood::log_marginal_likelihood(&kernel, noise, &xs, &ys, prior_mean).ok()?;
        if !learned {
            g.pop();
        }
        if !v.is_finite() || g.iter().any(|x| !x.is_finite()) {
            return None;
        }
        Some((-v, g.into_iter().map(|x| -x).collect()))
    };

    let mut rng = seeds::rng(seed);
    let mut best: Option<optimize::Minimum> = None;
    let mut failures = Vec::new();
    for start in 0..cfg.n_starts.max(1) {
        let mut theta0 = vec![0.0; n_theta];
        if start > 0 {
            theta0[0] = rng.random_range(-1.0..1.0);
            for t in &mut theta0[1..n_kernel] {
                *t = rng.random_range(-2.0..2.0);
            }
        }
        if learned {
            theta0[n_kernel] = if start == 0 { (1e-3f64).ln() } else { rng.random_range((1e-6f64).ln()..(1e-1f64).ln()) };
        }
        match optimize::minimize_box(&objective, &theta0, &lower, &upper, &cfg.optimizer) {
            Some(m) if best.as_ref().is_none_or(|b| m.value < b.value) => best = Some(m),
            Some(_) => {}
            None => failures.push(format!("start {start} at {theta0:?} could not be evaluated")),
        }
    }
    let Some(best) = best else {
        return Err(Error::TrainingFailure(failures.join("; ")));
    };
    let kernel = Kernel::from_log_params(cfg.kernel, d, &best.x[..n_kernel]);
    let noise = if learned { best.x[n_kernel].exp() } else { fixed_noise };
    TrainedGp::condition(kernel, noise, xs, &ys, prior_mean, input_scaler, output_scaler)
}
