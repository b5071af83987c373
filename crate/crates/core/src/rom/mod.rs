//! Non-intrusive POD-GPR surrogates and their error metrics.
//!
//! [`GlobalRom`] regresses each reduced coefficient on the joint input
//! `(t, μ)`; [`TdRom`] first factorizes each coefficient's time × sample
//! matrix by a truncated SVD and regresses time modes on `t` and parameter
//! modes on `μ` separately.

pub mod bundle;
pub mod global;
pub mod metrics;
pub mod td;

use nalgebra::{DMatrix, DVector};
use serde::{Deserialize, Serialize};

use crate::error::{Error, Result};
use crate::pod::{CoefficientTable, ReducedBasis};
pub use global::{train_global_rom, GlobalConfig, GlobalRom};
pub use td::{train_td_rom, TdConfig, TdRom};

/// Half-width of the reported confidence band in standard deviations.
pub const BAND_Z: f64 = 1.96;

#[derive(Debug, Clone, Copy, PartialEq, Eq, Serialize, Deserialize)]
#[serde(rename_all = "lowercase")]
pub enum RomVariant {
    Global,
    Td,
}

impl std::str::FromStr for RomVariant {
    type Err = Error;

    fn from_str(s: &str) -> Result<Self> {
        match s {
            "global" => Ok(Self::Global),
            "td" => Ok(Self::Td),
            other => Err(Error::InvalidConfig(format!("unknown ROM variant {other:?}"))),
        }
    }
}

/// Predicted reduced coefficients at one `(t, μ)`.
#[derive(Debug, Clone, PartialEq)]
pub struct RomPrediction {
    pub mean: Vec<f64>,
    pub variance: Vec<f64>,
    /// The query lies outside the box spanned by the training inputs.
    pub extrapolated: bool,
}

impl RomPrediction {
    pub fn lower(&self) -> Vec<f64> {
        self.mean.iter().zip(&self.variance).map(|(m, v)| m - BAND_Z * v.sqrt()).collect()
    }

    pub fn upper(&self) -> Vec<f64> {
        self.mean.iter().zip(&self.variance).map(|(m, v)| m + BAND_Z * v.sqrt()).collect()
    }

    pub fn field(&self, basis: &ReducedBasis) -> DVector<f64> {
        &basis.v * DVector::from_column_slice(&self.mean)
    }
}

/// The training grid shared by both variants.
#[derive(Debug, Clone, PartialEq, Serialize, Deserialize)]
pub struct TrainingDesign {
    pub times: Vec<f64>,
    /// One row per sample.
    pub params: Vec<Vec<f64>>,
}

impl TrainingDesign {
    pub fn new(table: &CoefficientTable, times: &[f64], params: &DMatrix<f64>) -> Result<Self> {
        if table.n_steps != times.len() {
            return Err(Error::DimensionMismatch { expected: table.n_steps, found: times.len() });
        }
        if table.n_samples != params.nrows() {
            return Err(Error::DimensionMismatch { expected: table.n_samples, found: params.nrows() });
        }
        Ok(Self {
            times: times.to_vec(),
            params: params.row_iter().map(|r| r.iter().copied().collect()).collect(),
        })
    }

    pub fn n_params(&self) -> usize {
        self.params.first().map_or(0, Vec::len)
    }

    pub fn params_matrix(&self) -> DMatrix<f64> {
        DMatrix::from_fn(self.params.len(), self.n_params(), |i, j| self.params[i][j])
    }

    /// Whether `(t, μ)` lies outside the bounding box of the training inputs.
    pub fn outside(&self, t: f64, mu: &[f64]) -> bool {
        let (tmin, tmax) = bounds(self.times.iter().copied());
        if t < tmin || t > tmax {
            return true;
        }
        (0..self.n_params()).any(|j| {
            let (lo, hi) = bounds(self.params.iter().map(|r| r[j]));
            mu[j] < lo || mu[j] > hi
        })
    }

    pub fn hash(&self) -> String {
        crate::seeds::sha256_hex(&serde_json::to_vec(self).expect("design serializes"))
    }
}

fn bounds(values: impl Iterator<Item = f64>) -> (f64, f64) {
    values.fold((f64::INFINITY, f64::NEG_INFINITY), |(lo, hi), v| (lo.min(v), hi.max(v)))
}

/// Either surrogate behind one interface.
#[derive(Debug, Clone)]
pub enum Rom {
    Global(GlobalRom),
    Td(TdRom),
}

impl Rom {
    pub fn variant(&self) -> RomVariant {
        match self {
            Rom::Global(_) => RomVariant::Global,
            Rom::Td(_) => RomVariant::Td,
        }
    }

    pub fn basis(&self) -> &ReducedBasis {
        match self {
            Rom::Global(r) => &r.basis,
            Rom::Td(r) => &r.basis,
        }
    }

    pub fn design(&self) -> &TrainingDesign {
        match self {
            Rom::Global(r) => &r.design,
            Rom::Td(r) => &r.design,
        }
    }

    pub fn n_gps(&self) -> usize {
        match self {
            Rom::Global(r) => r.gps.len(),
            Rom::Td(r) => r.n_gps(),
        }
    }

    pub fn predict(&self, t: f64, mu: &[f64]) -> Result<RomPrediction> {
        match self {
            Rom::Global(r) => r.predict(t, mu),
            Rom::Td(r) => r.predict(t, mu),
        }
    }

    /// Predicted coefficient means, N × times.len().
    pub fn predict_trajectory(&self, mu: &[f64], times: &[f64]) -> Result<DMatrix<f64>> {
        match self {
            Rom::Global(r) => r.predict_trajectory(mu, times),
            Rom::Td(r) => r.predict_trajectory(mu, times),
        }
    }

    /// Kernel evaluations needed for one `(t*, μ*)` query.
    pub fn kernel_evaluations_per_query(&self) -> usize {
        match self {
            Rom::Global(r) => r.gps.iter().map(|g| g.n_train()).sum(),
            Rom::Td(r) => r.kernel_evaluations_per_query(),
        }
    }
}
