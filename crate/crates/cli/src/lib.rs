//! Staged study pipeline around `podgpr-core`: full-order snapshots, POD,
//! ROM training and evaluation, Morris, Sobol and MCMC, with hashed manifests
//! so that finished stages are skipped on rerun.

pub mod config;
pub mod error;
pub mod stage;
pub mod study;

pub use config::StudyConfig;
pub use error::{CliError, Result};
