//! Non-intrusive reduced order modelling for nonlinear elastodynamics.
//!
//! The crate covers the whole offline/online pipeline:
//!
//! * [`fom`]: a hexahedral finite-element solver for a clamped Guccione beam
//!   under a ramped follower pressure, used as the black-box snapshot generator;
//! * [`pod`]: reduced basis construction by thin SVD and coefficient projection;
//! * [`gpr`]: single-output Gaussian-process regression with marginal-likelihood
//!   training;
//! * [`rom`]: the global and tensor-decomposition POD-GPR surrogates and their
//!   error metrics;
//! * [`uq`] and [`bayes`]: Morris screening, Sobol indices and Metropolis-Hastings
//!   parameter estimation, all driven through the opaque [`model::Model`] trait.

pub mod bayes;
pub mod container;
pub mod error;
pub mod fom;
pub mod gpr;
pub mod model;
pub mod pod;
pub mod rom;
pub mod sampling;
pub mod seeds;
pub mod uq;

pub use error::{Error, Result};
