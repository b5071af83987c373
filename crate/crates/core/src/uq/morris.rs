//! Morris elementary-effects screening on the ι-level grid of the unit hypercube.

use nalgebra::DMatrix;
use rand::seq::SliceRandom;
use rand::Rng;
use serde::{Deserialize, Serialize};

use crate::error::{Error, Result};
use crate::sampling::ParameterSpace;
use crate::seeds;

#[derive(Debug, Clone, Serialize, Deserialize)]
pub struct MorrisDesign {
    pub levels: usize,
    pub delta: f64,
    pub trajectories: usize,
    pub seed: u64,
    /// Design points in unit coordinates, `r(p+1) × p`, trajectory by trajectory.
    pub unit: DMatrix<f64>,
    /// The same points in physical units.
    pub points: DMatrix<f64>,
    /// Physical widths of the parameter box, used for physical-unit effects.
    pub widths: Vec<f64>,
}

impl MorrisDesign {
    pub fn dim(&self) -> usize {
        self.unit.ncols()
    }

    pub fn n_points(&self) -> usize {
        self.unit.nrows()
    }
}

pub fn morris_design(space: &ParameterSpace, r: usize, levels: usize, seed: u64) -> Result<MorrisDesign> {
    space.validate()?;
    if r == 0 {
        return Err(Error::InvalidConfig("Morris needs at least one trajectory".into()));
    }
    if levels < 2 || levels % 2 != 0 {
        return Err(Error::InvalidConfig(format!("number of levels {levels} must be even and at least 2")));
    }
    let p = space.dim();
    let half = levels / 2;
    let step = 1.0 / (levels - 1) as f64;
    let delta = levels as f64 / (2.0 * (levels - 1) as f64);
    let mut rng = seeds::stream(seed, "morris");
    let mut unit = DMatrix::zeros(r * (p + 1), p);
    for traj in 0..r {
        // start levels; the move is +Δ from the lower half of the grid and −Δ from the upper half
        let mut grid: Vec<usize> = (0..p).map(|_| rng.random_range(0..levels)).collect();
        let mut order: Vec<usize> = (0..p).collect();
        order.shuffle(&mut rng);
        let base = traj * (p + 1);
        for (i, g) in grid.iter().enumerate() {
            unit[(base, i)] = *g as f64 * step;
        }
        for (k, &i) in order.iter().enumerate() {
            grid[i] = if grid[i] < half { grid[i] + half } else { grid[i] - half };
            for (j, g) in grid.iter().enumerate() {
                unit[(base + k + 1, j)] = *g as f64 * step;
            }
        }
    }
    let points = DMatrix::from_fn(unit.nrows(), p, |i, j| space.lower[j] + unit[(i, j)] * space.width(j));
    Ok(MorrisDesign {
        levels,
        delta,
        trajectories: r,
        seed,
        unit,
        points,
        widths: (0..p).map(|i| space.width(i)).collect(),
    })
}

/// Morris statistics of one output.
#[derive(Debug, Clone, PartialEq, Serialize, Deserialize)]
pub struct MorrisIndices {
    pub mean: Vec<f64>,
    pub mean_abs: Vec<f64>,
    /// `None` when only one trajectory was run.
    pub sd: Vec<Option<f64>>,
    /// Elementary effects, `r × p`.
    pub effects: DMatrix<f64>,
}

#[derive(Debug, Clone, Serialize, Deserialize)]
pub struct MorrisResult {
    /// One entry per output column.
    pub outputs: Vec<MorrisIndices>,
}

/// Elementary effects and their statistics. `outputs` holds one row per
/// design point and one column per quantity of interest. With `physical`
/// the differences are taken in physical parameter units instead of unit-cube
/// coordinates.
pub fn morris_indices(design: &MorrisDesign, outputs: &DMatrix<f64>, physical: bool) -> Result<MorrisResult> {
    if outputs.nrows() != design.n_points() {
        return Err(Error::DimensionMismatch { expected: design.n_points(), found: outputs.nrows() });
    }
    let p = design.dim();
    let r = design.trajectories;
    let mut result = Vec::with_capacity(outputs.ncols());
    for q in 0..outputs.ncols() {
        let mut effects = DMatrix::zeros(r, p);
        for traj in 0..r {
            let base = traj * (p + 1);
            for k in 0..p {
                let (a, b) = (base + k, base + k + 1);
                let i = (0..p)
                    .find(|&j| design.unit[(a, j)] != design.unit[(b, j)])
                    .ok_or_else(|| Error::InvalidConfig("Morris trajectory repeats a point".into()))?;
                let mut dx = design.unit[(b, i)] - design.unit[(a, i)];
                if physical {
                    dx *= design.widths[i];
                }
                effects[(traj, i)] = (outputs[(b, q)] - outputs[(a, q)]) / dx;
            }
        }
        let mean: Vec<f64> = (0..p).map(|i| effects.column(i).sum() / r as f64).collect();
        let mean_abs = (0..p).map(|i| effects.column(i).iter().map(|e| e.abs()).sum::<f64>() / r as f64).collect();
        let sd = (0..p)
            .map(|i| {
                (r > 1).then(|| {
                    let ss: f64 = effects.column(i).iter().map(|e| (e - mean[i]).powi(2)).sum();
                    (ss / (r - 1) as f64).sqrt()
                })
            })
            .collect();
        result.push(MorrisIndices { mean, mean_abs, sd, effects });
    }
    Ok(MorrisResult { outputs: result })
}
