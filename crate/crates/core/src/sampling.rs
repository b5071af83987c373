//! Parameter spaces, Latin hypercube designs and feature scaling.

use nalgebra::DMatrix;
use rand::seq::SliceRandom;
use rand::Rng;
use serde::{Deserialize, Serialize};

use crate::error::{Error, Result};
use crate::seeds;

/// Hyper-rectangle of physical inputs.
#[derive(Debug, Clone, PartialEq, Serialize, Deserialize)]
pub struct ParameterSpace {
    pub names: Vec<String>,
    pub lower: Vec<f64>,
    pub upper: Vec<f64>,
}

/// Input names of the beam problem, in parameter-vector order.
pub const BEAM_PARAMETERS: [&str; 9] = ["b_f", "b_s", "b_n", "b_fs", "b_fn", "b_sn", "K", "C", "p_tilde"];

impl ParameterSpace {
    pub fn new(names: Vec<String>, lower: Vec<f64>, upper: Vec<f64>) -> Result<Self> {
        let space = Self { names, lower, upper };
        space.validate()?;
        Ok(space)
    }

    pub fn validate(&self) -> Result<()> {
        let p = self.names.len();
        if p == 0 {
            return Err(Error::InvalidConfig("parameter space has no inputs".into()));
        }
        if self.lower.len() != p || self.upper.len() != p {
            return Err(Error::InvalidConfig(format!(
                "parameter space: {p} names but {} lower / {} upper bounds",
                self.lower.len(),
                self.upper.len()
            )));
        }
        for i in 0..p {
            if !(self.lower[i] < self.upper[i]) {
                return Err(Error::InvalidConfig(format!(
                    "parameter {}: lower bound {} not below upper bound {}",
                    self.names[i], self.lower[i], self.upper[i]
                )));
            }
        }
        Ok(())
    }

    /// Bounds of the beam benchmark (b_* dimensionless, K, C and p_tilde in kPa).
    pub fn beam() -> Self {
        Self {
            names: BEAM_PARAMETERS.iter().map(|s| s.to_string()).collect(),
            lower: vec![4.0, 1.0, 1.0, 2.0, 2.0, 1.0, 25.0, 1.0, 0.002],
            upper: vec![12.0, 3.0, 3.0, 6.0, 6.0, 3.0, 75.0, 3.0, 0.006],
        }
    }

    pub fn dim(&self) -> usize {
        self.names.len()
    }

    pub fn width(&self, i: usize) -> f64 {
        self.upper[i] - self.lower[i]
    }

    pub fn midpoint(&self) -> Vec<f64> {
        (0..self.dim()).map(|i| 0.5 * (self.lower[i] + self.upper[i])).collect()
    }

    pub fn contains(&self, mu: &[f64]) -> bool {
        mu.len() == self.dim() && mu.iter().enumerate().all(|(i, &v)| v >= self.lower[i] && v <= self.upper[i])
    }

    /// Maps a point of the unit hypercube to physical units.
    pub fn from_unit(&self, unit: &[f64]) -> Vec<f64> {
        unit.iter()
            .enumerate()
            .map(|(i, &u)| self.lower[i] + u * self.width(i))
            .collect()
    }

    pub fn to_unit(&self, mu: &[f64]) -> Vec<f64> {
        mu.iter()
            .enumerate()
            .map(|(i, &v)| (v - self.lower[i]) / self.width(i))
            .collect()
    }

    pub fn index_of(&self, name: &str) -> Option<usize> {
        self.names.iter().position(|n| n == name)
    }
}

/// Latin hypercube design with `n_samples` rows in physical units.
///
/// Each column gets an independent random permutation of the strata and a
/// uniform offset inside its stratum, so after rescaling to `[0, 1]` every
/// interval `[k/n, (k+1)/n)` holds exactly one value.
pub fn lhs_sample(space: &ParameterSpace, n_samples: usize, seed: u64) -> Result<DMatrix<f64>> {
    if n_samples == 0 {
        return Err(Error::InvalidConfig("LHS needs at least one sample".into()));
    }
    space.validate()?;
    let mut rng = seeds::rng(seed);
    let p = space.dim();
    let mut design = DMatrix::zeros(n_samples, p);
    let mut strata: Vec<usize> = (0..n_samples).collect();
    for j in 0..p {
        strata.shuffle(&mut rng);
        for (row, &k) in strata.iter().enumerate() {
            let u = (k as f64 + rng.random::<f64>()) / n_samples as f64;
            design[(row, j)] = space.lower[j] + u * space.width(j);
        }
    }
    Ok(design)
}

#[derive(Debug, Clone, Copy, PartialEq, Eq, Serialize, Deserialize)]
#[serde(rename_all = "kebab-case")]
pub enum ScalerKind {
    MinMax,
    Standardize,
}

/// Row-wise affine feature scaling, `scaled = (x - offset) / scale`.
///
/// Rows are features and columns are observations, matching the `d × n`
/// layout of GP inputs. Statistics come from the training data only and are
/// never clipped when applied to new data.
#[derive(Debug, Clone, PartialEq, Serialize, Deserialize)]
pub struct Scaler {
    pub kind: ScalerKind,
    pub offset: Vec<f64>,
    pub scale: Vec<f64>,
}

impl Scaler {
    pub fn fit(kind: ScalerKind, data: &DMatrix<f64>) -> Result<Self> {
        if data.ncols() == 0 {
            return Err(Error::DegenerateData("cannot fit a scaler on zero observations".into()));
        }
        let mut offset = Vec::with_capacity(data.nrows());
        let mut scale = Vec::with_capacity(data.nrows());
        for (i, row) in data.row_iter().enumerate() {
            let (o, s) = match kind {
                ScalerKind::MinMax => {
                    let lo = row.min();
                    let hi = row.max();
                    if hi <= lo {
                        return Err(Error::DegenerateFeature { row: i, reason: "constant row" });
                    }
                    (lo, hi - lo)
                }
                ScalerKind::Standardize => {
                    let n = row.len() as f64;
                    let mean = row.sum() / n;
                    // population standard deviation
                    let var = row.iter().map(|v| (v - mean).powi(2)).sum::<f64>() / n;
                    let std = var.sqrt();
                    if !(std > 0.0) || std <= 1e-14 * mean.abs() {
                        return Err(Error::DegenerateFeature { row: i, reason: "zero standard deviation" });
                    }
                    (mean, std)
                }
            };
            offset.push(o);
            scale.push(s);
        }
        Ok(Self { kind, offset, scale })
    }

    /// Like [`Scaler::fit`] but degenerate rows get a unit scale centred on
    /// their mean instead of an error, so constant features pass through.
    pub fn fit_or_center(kind: ScalerKind, data: &DMatrix<f64>) -> Result<Self> {
        let mut offset = Vec::with_capacity(data.nrows());
        let mut scale = Vec::with_capacity(data.nrows());
        for i in 0..data.nrows() {
            let row = data.rows(i, 1).into_owned();
            match Self::fit(kind, &row) {
                Ok(s) => {
                    offset.push(s.offset[0]);
                    scale.push(s.scale[0]);
                }
                Err(Error::DegenerateFeature { .. }) => {
                    offset.push(row.mean());
                    scale.push(1.0);
                }
                Err(e) => return Err(e),
            }
        }
        Ok(Self { kind, offset, scale })
    }

    pub fn dim(&self) -> usize {
        self.offset.len()
    }

    pub fn apply(&self, data: &DMatrix<f64>) -> Result<DMatrix<f64>> {
        self.check(data)?;
        Ok(DMatrix::from_fn(data.nrows(), data.ncols(), |i, j| {
            (data[(i, j)] - self.offset[i]) / self.scale[i]
        }))
    }

    pub fn invert(&self, scaled: &DMatrix<f64>) -> Result<DMatrix<f64>> {
        self.check(scaled)?;
        Ok(DMatrix::from_fn(scaled.nrows(), scaled.ncols(), |i, j| {
            scaled[(i, j)] * self.scale[i] + self.offset[i]
        }))
    }

    /// Scales a single observation (one value per row).
    pub fn apply_point(&self, x: &[f64], out: &mut [f64]) {
        for i in 0..self.dim() {
            out[i] = (x[i] - self.offset[i]) / self.scale[i];
        }
    }

    pub fn invert_value(&self, row: usize, v: f64) -> f64 {
        v * self.scale[row] + self.offset[row]
    }

    /// Maps a variance in scaled units back to physical units.
    pub fn invert_variance(&self, row: usize, var: f64) -> f64 {
        var * self.scale[row] * self.scale[row]
    }

    fn check(&self, data: &DMatrix<f64>) -> Result<()> {
        if data.nrows() != self.dim() {
            return Err(Error::DimensionMismatch {
                expected: self.dim(),
                found: data.nrows(),
            });
        }
        Ok(())
    }
}
