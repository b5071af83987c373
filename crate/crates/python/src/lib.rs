//! Python bindings: the beam FOM, POD, GP regression, trained ROM bundles,
//! the Morris, Sobol and MCMC drivers over Python callables, and the study
//! pipeline stages.

use std::path::PathBuf;

use nalgebra::DMatrix;
use podgpr_cli::study::{self, ModelChoice};
use podgpr_cli::StudyConfig;
use podgpr_core::bayes::{chain_summary, metropolis_hastings, InverseProblem, McmcConfig, Proposal};
use podgpr_core::fom::{FomConfig, FomSolver, MaterialParams, Mesh};
use podgpr_core::gpr::{train_gp, GpConfig, KernelKind, TrainedGp};
use podgpr_core::model::Model;
use podgpr_core::pod::{PodCriterion, ReducedBasis};
use podgpr_core::rom::bundle::read_rom;
use podgpr_core::rom::{Rom, RomVariant};
use podgpr_core::sampling::{lhs_sample, ParameterSpace};
use podgpr_core::uq::{morris_design, morris_indices, saltelli_design, sobol_indices};
use podgpr_core::Error;
use pyo3::exceptions::{PyRuntimeError, PyValueError};
use pyo3::prelude::*;
use pyo3::types::PyDict;

fn err<E: std::fmt::Display>(e: E) -> PyErr {
    PyValueError::new_err(e.to_string())
}

fn rows(m: &DMatrix<f64>) -> Vec<Vec<f64>> {
    m.row_iter().map(|r| r.iter().copied().collect()).collect()
}

fn columns(m: &DMatrix<f64>) -> Vec<Vec<f64>> {
    m.column_iter().map(|c| c.iter().copied().collect()).collect()
}

fn from_rows(data: &[Vec<f64>]) -> PyResult<DMatrix<f64>> {
    let n_cols = data.first().map_or(0, Vec::len);
    if data.iter().any(|r| r.len() != n_cols) {
        return Err(PyValueError::new_err("ragged nested list"));
    }
    Ok(DMatrix::from_fn(data.len(), n_cols, |i, j| data[i][j]))
}

fn from_columns(data: &[Vec<f64>]) -> PyResult<DMatrix<f64>> {
    Ok(from_rows(data)?.transpose())
}

#[pyclass(name = "ParameterSpace", module = "podgpr", from_py_object)]
#[derive(Clone)]
struct PyParameterSpace {
    inner: ParameterSpace,
}

#[pymethods]
impl PyParameterSpace {
    #[new]
    fn new(names: Vec<String>, lower: Vec<f64>, upper: Vec<f64>) -> PyResult<Self> {
        Ok(Self { inner: ParameterSpace::new(names, lower, upper).map_err(err)? })
    }

    /// The nine-parameter beam space.
    #[staticmethod]
    fn beam() -> Self {
        Self { inner: ParameterSpace::beam() }
    }

    #[getter]
    fn names(&self) -> Vec<String> {
        self.inner.names.clone()
    }

    #[getter]
    fn lower(&self) -> Vec<f64> {
        self.inner.lower.clone()
    }

    #[getter]
    fn upper(&self) -> Vec<f64> {
        self.inner.upper.clone()
    }

    fn dim(&self) -> usize {
        self.inner.dim()
    }

    /// Latin hypercube design, one row per sample.
    fn lhs(&self, n_samples: usize, seed: u64) -> PyResult<Vec<Vec<f64>>> {
        Ok(rows(&lhs_sample(&self.inner, n_samples, seed).map_err(err)?))
    }
}

/// Full-order solver on a structured beam mesh.
#[pyclass(name = "BeamFom", module = "podgpr")]
struct PyBeamFom {
    solver: FomSolver,
    density: f64,
}

#[pymethods]
impl PyBeamFom {
    #[new]
    #[pyo3(signature = (elements = (10, 2, 2), lengths = (1e-2, 1e-3, 1e-3), dt = 0.005, t_final = 0.25, density = 1e3))]
    fn new(elements: (usize, usize, usize), lengths: (f64, f64, f64), dt: f64, t_final: f64, density: f64) -> PyResult<Self> {
        let mesh = Mesh::beam(elements.0, elements.1, elements.2, lengths.0, lengths.1, lengths.2).map_err(err)?;
        let config = FomConfig { dt, t_final, ..FomConfig::default() };
        Ok(Self { solver: FomSolver::new(mesh, config).map_err(err)?, density })
    }

    #[getter]
    fn n_dofs(&self) -> usize {
        self.solver.mesh().n_dofs()
    }

    #[getter]
    fn times(&self) -> PyResult<Vec<f64>> {
        self.solver.config().times().map_err(err)
    }

    /// Displacements for the nine beam parameters, one list of DOF values per time step.
    fn solve(&self, py: Python<'_>, mu: Vec<f64>) -> PyResult<Vec<Vec<f64>>> {
        let mat = MaterialParams::from_vector(&mu, self.density).map_err(err)?;
        let (traj, _) = py.detach(|| self.solver.solve(&mat)).map_err(err)?;
        Ok(columns(&traj.displacements))
    }
}

#[pyclass(name = "ReducedBasis", module = "podgpr")]
struct PyReducedBasis {
    inner: ReducedBasis,
}

#[pymethods]
impl PyReducedBasis {
    /// POD of snapshot vectors; keeps the smallest basis whose relative
    /// discarded energy is at most `tolerance²`, or exactly `n` modes.
    #[new]
    #[pyo3(signature = (snapshots, tolerance = 5e-4, n = None))]
    fn new(snapshots: Vec<Vec<f64>>, tolerance: f64, n: Option<usize>) -> PyResult<Self> {
        let criterion = n.map_or(PodCriterion::Energy(tolerance), PodCriterion::Fixed);
        Ok(Self { inner: ReducedBasis::build(&from_columns(&snapshots)?, criterion).map_err(err)? })
    }

    #[getter]
    fn n(&self) -> usize {
        self.inner.n()
    }

    #[getter]
    fn singular_values(&self) -> Vec<f64> {
        self.inner.singular_values.clone()
    }

    /// Basis vectors, one list per mode.
    #[getter]
    fn modes(&self) -> Vec<Vec<f64>> {
        columns(&self.inner.v)
    }

    fn project(&self, snapshots: Vec<Vec<f64>>) -> PyResult<Vec<Vec<f64>>> {
        Ok(columns(&self.inner.project(&from_columns(&snapshots)?).map_err(err)?))
    }

    fn reconstruct(&self, coefficients: Vec<Vec<f64>>) -> PyResult<Vec<Vec<f64>>> {
        Ok(columns(&self.inner.reconstruct(&from_columns(&coefficients)?).map_err(err)?))
    }
}

#[pyclass(name = "GaussianProcess", module = "podgpr")]
struct PyGaussianProcess {
    inner: TrainedGp,
}

fn kernel_kind(name: &str, degree: u32) -> PyResult<KernelKind> {
    match name {
        "rbf" => Ok(KernelKind::Rbf),
        "ard-rbf" => Ok(KernelKind::ArdRbf),
        "polynomial" => Ok(KernelKind::Polynomial { degree }),
        other => Err(PyValueError::new_err(format!("unknown kernel {other:?}"))),
    }
}

#[pymethods]
impl PyGaussianProcess {
    /// Maximum-likelihood GP on inputs `x` (one row per point) and labels `y`.
    #[new]
    #[pyo3(signature = (x, y, kernel = "ard-rbf", degree = 2, n_starts = 5, seed = 0))]
    fn new(py: Python<'_>, x: Vec<Vec<f64>>, y: Vec<f64>, kernel: &str, degree: u32, n_starts: usize, seed: u64) -> PyResult<Self> {
        let cfg = GpConfig { kernel: kernel_kind(kernel, degree)?, n_starts, ..GpConfig::default() };
        let xm = from_columns(&x)?;
        let inner = py.detach(|| train_gp(&xm, &y, &cfg, seed)).map_err(err)?;
        Ok(Self { inner })
    }

    #[getter]
    fn noise_std(&self) -> f64 {
        self.inner.noise_std
    }

    #[getter]
    fn log_likelihood(&self) -> f64 {
        self.inner.log_likelihood
    }

    /// Kernel log-hyperparameters in scaled units.
    #[getter]
    fn log_hyperparameters(&self) -> Vec<f64> {
        self.inner.kernel.log_params()
    }

    /// Predictive means and variances at each row of `x`.
    fn predict(&self, x: Vec<Vec<f64>>) -> PyResult<(Vec<f64>, Vec<f64>)> {
        self.inner.predict(&from_columns(&x)?).map_err(err)
    }
}

/// A trained ROM bundle read from disk.
#[pyclass(name = "Rom", module = "podgpr")]
struct PyRom {
    inner: Rom,
}

#[pymethods]
impl PyRom {
    #[staticmethod]
    fn load(path: PathBuf) -> PyResult<Self> {
        Ok(Self { inner: read_rom(&path).map_err(err)? })
    }

    #[getter]
    fn variant(&self) -> &'static str {
        match self.inner.variant() {
            RomVariant::Global => "global",
            RomVariant::Td => "td",
        }
    }

    #[getter]
    fn n(&self) -> usize {
        self.inner.basis().n()
    }

    #[getter]
    fn n_gps(&self) -> usize {
        self.inner.n_gps()
    }

    /// Reduced coefficient means and variances at `(t, mu)`, and whether the query extrapolates.
    fn predict(&self, t: f64, mu: Vec<f64>) -> PyResult<(Vec<f64>, Vec<f64>, bool)> {
        let p = self.inner.predict(t, &mu).map_err(err)?;
        Ok((p.mean, p.variance, p.extrapolated))
    }

    /// Reconstructed displacement fields, one list per entry of `times`.
    fn predict_fields(&self, mu: Vec<f64>, times: Vec<f64>) -> PyResult<Vec<Vec<f64>>> {
        let q = self.inner.predict_trajectory(&mu, &times).map_err(err)?;
        Ok(columns(&self.inner.basis().reconstruct(&q).map_err(err)?))
    }
}

/// A Python callable `mu -> list of outputs` as a [`Model`].
struct PyModel {
    f: Py<PyAny>,
    inputs: usize,
    outputs: usize,
}

impl PyModel {
    fn new(py: Python<'_>, f: Py<PyAny>, space: &ParameterSpace) -> PyResult<Self> {
        let probe: Vec<f64> = f.bind(py).call1((space.midpoint(),))?.extract()?;
        Ok(Self { f, inputs: space.dim(), outputs: probe.len() })
    }
}

impl Model for PyModel {
    fn n_inputs(&self) -> usize {
        self.inputs
    }

    fn n_outputs(&self) -> usize {
        self.outputs
    }

    fn evaluate(&self, mu: &[f64]) -> podgpr_core::Result<Vec<f64>> {
        Python::attach(|py| {
            let out = self.f.bind(py).call1((mu.to_vec(),)).and_then(|v| v.extract::<Vec<f64>>().map_err(PyErr::from));
            out.map_err(|e| Error::ModelFailure { mu: mu.to_vec(), message: e.to_string() })
        })
    }
}

/// Morris screening of `model` over `space`: per-output `mean`, `mean_abs`, `sd`.
#[pyfunction]
#[pyo3(signature = (model, space, trajectories = 20, levels = 6, seed = 0, physical = false))]
fn morris<'py>(
    py: Python<'py>,
    model: Py<PyAny>,
    space: PyParameterSpace,
    trajectories: usize,
    levels: usize,
    seed: u64,
    physical: bool,
) -> PyResult<Vec<Bound<'py, PyDict>>> {
    let m = PyModel::new(py, model, &space.inner)?;
    let design = morris_design(&space.inner, trajectories, levels, seed).map_err(err)?;
    let outputs = py.detach(|| m.evaluate_rows(&design.points)).map_err(err)?;
    let result = morris_indices(&design, &outputs, physical).map_err(err)?;
    result
        .outputs
        .iter()
        .map(|r| {
            let d = PyDict::new(py);
            d.set_item("mean", r.mean.clone())?;
            d.set_item("mean_abs", r.mean_abs.clone())?;
            d.set_item("sd", r.sd.clone())?;
            Ok(d)
        })
        .collect()
}

/// Sobol first-order and total indices of `model` from a Saltelli design.
#[pyfunction]
#[pyo3(signature = (model, space, n_samples = 1024, seed = 0))]
fn sobol<'py>(py: Python<'py>, model: Py<PyAny>, space: PyParameterSpace, n_samples: usize, seed: u64) -> PyResult<Vec<Bound<'py, PyDict>>> {
    let m = PyModel::new(py, model, &space.inner)?;
    let design = saltelli_design(&space.inner, n_samples, seed).map_err(err)?;
    let outputs = py.detach(|| m.evaluate_rows(&design.rows())).map_err(err)?;
    let result = sobol_indices(&design, &outputs).map_err(err)?;
    result
        .outputs
        .iter()
        .map(|s| {
            let d = PyDict::new(py);
            d.set_item("first", s.first.clone())?;
            d.set_item("total", s.total.clone())?;
            d.set_item("first_noise", s.first_noise.clone())?;
            d.set_item("total_noise", s.total_noise.clone())?;
            Ok(d)
        })
        .collect()
}

/// Metropolis-Hastings under a uniform prior on `space` and Gaussian noise of
/// variance `noise_variance`; a random-walk proposal when `step` is given.
#[pyfunction]
#[pyo3(signature = (model, y_obs, noise_variance, space, n_mc = 10000, burn_in = 500, thin = 4, seed = 0, initial = None, step = None))]
#[allow(clippy::too_many_arguments)]
fn mcmc<'py>(
    py: Python<'py>,
    model: Py<PyAny>,
    y_obs: Vec<f64>,
    noise_variance: f64,
    space: PyParameterSpace,
    n_mc: usize,
    burn_in: usize,
    thin: usize,
    seed: u64,
    initial: Option<Vec<f64>>,
    step: Option<Vec<f64>>,
) -> PyResult<Bound<'py, PyDict>> {
    let m = PyModel::new(py, model, &space.inner)?;
    let problem = InverseProblem::new(&m, y_obs, noise_variance, space.inner.clone()).map_err(err)?;
    let proposal = step.map_or(Proposal::IndependenceUniform, |step| Proposal::RandomWalk { step });
    let cfg = McmcConfig { n_mc, burn_in, thin, proposal, seed, initial };
    let chain = py.detach(|| metropolis_hastings(&problem, &cfg)).map_err(err)?;
    let summary = chain_summary(&chain.kept).map_err(err)?;
    let d = PyDict::new(py);
    d.set_item("kept", rows(&chain.kept))?;
    d.set_item("acceptance_rate", chain.acceptance_rate())?;
    d.set_item("stuck", chain.is_stuck())?;
    d.set_item("mean", summary.mean)?;
    d.set_item("std", summary.std)?;
    d.set_item("q05", summary.q05)?;
    d.set_item("q50", summary.q50)?;
    d.set_item("q95", summary.q95)?;
    Ok(d)
}

/// Runs one study stage (`snapshots`, `pod`, `train`, `evaluate`, `morris`,
/// `sobol`, `mcmc` or `report`) and returns its manifest details as JSON.
#[pyfunction]
#[pyo3(signature = (stage, config = None, out = None, seed = None, variant = None, model = None))]
fn run_stage(
    py: Python<'_>,
    stage: &str,
    config: Option<PathBuf>,
    out: Option<PathBuf>,
    seed: Option<u64>,
    variant: Option<&str>,
    model: Option<&str>,
) -> PyResult<String> {
    let mut cfg = match config {
        Some(path) => StudyConfig::from_file(&path).map_err(err)?,
        None => StudyConfig::default(),
    };
    if let Some(out) = out {
        cfg.out_dir = out;
    }
    if let Some(seed) = seed {
        cfg.seed = seed;
    }
    let variant: RomVariant = variant.map_or(Ok(cfg.variant), str::parse).map_err(err)?;
    let model: ModelChoice = model.map_or(Ok(ModelChoice::from_variant(cfg.variant)), str::parse).map_err(err)?;
    let stage = stage.to_string();
    let details = py.detach(move || -> podgpr_cli::Result<serde_json::Value> {
        Ok(match stage.as_str() {
            "snapshots" => study::run_snapshots(&cfg)?.details,
            "pod" => study::run_pod(&cfg)?.details,
            "train" => study::run_train(&cfg, variant)?.details,
            "evaluate" => study::run_evaluate(&cfg, variant)?.0.details,
            "morris" => study::run_morris(&cfg, model)?.details,
            "sobol" => study::run_sobol(&cfg, model)?.details,
            "mcmc" => study::run_mcmc(&cfg, model)?.details,
            "report" => study::run_report(&cfg)?,
            other => return Err(podgpr_cli::CliError::Config(format!("unknown stage {other:?}"))),
        })
    });
    details.map(|d| d.to_string()).map_err(|e| PyRuntimeError::new_err(e.to_string()))
}

#[pymodule]
fn podgpr(m: &Bound<'_, PyModule>) -> PyResult<()> {
    m.add_class::<PyParameterSpace>()?;
    m.add_class::<PyBeamFom>()?;
    m.add_class::<PyReducedBasis>()?;
    m.add_class::<PyGaussianProcess>()?;
    m.add_class::<PyRom>()?;
    m.add_function(wrap_pyfunction!(morris, m)?)?;
    m.add_function(wrap_pyfunction!(sobol, m)?)?;
    m.add_function(wrap_pyfunction!(mcmc, m)?)?;
    m.add_function(wrap_pyfunction!(run_stage, m)?)?;
    Ok(())
}
