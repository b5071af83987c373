use std::path::PathBuf;

use thiserror::Error;

pub type Result<T, E = Error> = std::result::Result<T, E>;

#[derive(Debug, Error)]
pub enum Error {
    #[error("singular deformation: det(F) = {det:.3e}{}", element.map(|e| format!(" in element {e}")).unwrap_or_default())]
    SingularDeformation { det: f64, element: Option<usize> },

    #[error("Newton failed at step {step} after {iterations} iterations (residual {residual:.3e})")]
    NewtonFailure {
        step: usize,
        iterations: usize,
        residual: f64,
    },

    #[error("invalid mesh: {0}")]
    InvalidMesh(String),

    #[error("invalid configuration: {0}")]
    InvalidConfig(String),

    #[error("dimension mismatch: expected {expected}, got {found}")]
    DimensionMismatch { expected: usize, found: usize },

    #[error("index {index} out of range (len {len})")]
    OutOfRange { index: usize, len: usize },

    #[error("degenerate feature in row {row}: {reason}")]
    DegenerateFeature { row: usize, reason: &'static str },

    #[error("degenerate data: {0}")]
    DegenerateData(String),

    #[error("kernel matrix not positive definite after jitter {jitter:.1e}")]
    IllConditionedKernel { jitter: f64 },

    #[error("GP training failed: {0}")]
    TrainingFailure(String),

    #[error("{context}: {source}")]
    Context {
        context: String,
        #[source]
        source: Box<Error>,
    },

    #[error("model evaluation failed at {mu:?}: {message}")]
    ModelFailure { mu: Vec<f64>, message: String },

    #[error("linear solver: {0}")]
    LinearSolver(String),

    #[error("corrupt container {path}: {reason}")]
    CorruptContainer { path: PathBuf, reason: String },

    #[error(transparent)]
    Io(#[from] std::io::Error),

    #[error(transparent)]
    Json(#[from] serde_json::Error),
}

impl Error {
    /// Wraps the error with a short description of what was being done.
    pub fn context(self, context: impl Into<String>) -> Self {
        Error::Context {
            context: context.into(),
            source: Box::new(self),
        }
    }
}
