//! The opaque forward-model interface used by the sensitivity and inversion drivers.

use nalgebra::DMatrix;

use crate::error::{Error, Result};
use crate::fom::{FomSolver, MaterialParams, SnappedProbe};
use crate::rom::Rom;

/// A map from a physical parameter vector to a vector of quantities of interest.
pub trait Model: Sync {
    fn n_inputs(&self) -> usize;
    fn n_outputs(&self) -> usize;
    fn evaluate(&self, mu: &[f64]) -> Result<Vec<f64>>;

    /// Evaluates every row of `design`, returning one output row per input row.
    fn evaluate_rows(&self, design: &DMatrix<f64>) -> Result<DMatrix<f64>> {
        use rayon::prelude::*;
        if design.ncols() != self.n_inputs() {
            return Err(Error::DimensionMismatch { expected: self.n_inputs(), found: design.ncols() });
        }
        let rows: Vec<Vec<f64>> = (0..design.nrows())
            .into_par_iter()
            .map(|i| {
                let mu: Vec<f64> = design.row(i).iter().copied().collect();
                self.evaluate(&mu).map_err(|e| match e {
                    e @ Error::ModelFailure { .. } => e,
                    other => Error::ModelFailure { mu: mu.clone(), message: other.to_string() },
                })
            })
            .collect::<Result<_>>()?;
        let m = self.n_outputs();
        let mut out = DMatrix::zeros(rows.len(), m);
        for (i, r) in rows.iter().enumerate() {
            if r.len() != m {
                return Err(Error::DimensionMismatch { expected: m, found: r.len() });
            }
            for (j, v) in r.iter().enumerate() {
                out[(i, j)] = *v;
            }
        }
        Ok(out)
    }
}

/// Wraps a closure as a [`Model`].
pub struct FnModel<F> {
    inputs: usize,
    outputs: usize,
    f: F,
}

impl<F> FnModel<F>
where
    F: Fn(&[f64]) -> Vec<f64> + Sync,
{
    pub fn new(inputs: usize, outputs: usize, f: F) -> Self {
        Self { inputs, outputs, f }
    }
}

impl<F> Model for FnModel<F>
where
    F: Fn(&[f64]) -> Vec<f64> + Sync,
{
    fn n_inputs(&self) -> usize {
        self.inputs
    }

    fn n_outputs(&self) -> usize {
        self.outputs
    }

    fn evaluate(&self, mu: &[f64]) -> Result<Vec<f64>> {
        if mu.len() != self.inputs {
            return Err(Error::DimensionMismatch { expected: self.inputs, found: mu.len() });
        }
        Ok((self.f)(mu))
    }
}

/// Probe values of full-order solves. Inputs are the nine material and load
/// parameters in the order of [`MaterialParams::from_vector`].
pub struct FomModel {
    pub solver: FomSolver,
    pub probes: Vec<SnappedProbe>,
    pub density: f64,
}

impl Model for FomModel {
    fn n_inputs(&self) -> usize {
        9
    }

    fn n_outputs(&self) -> usize {
        self.probes.len()
    }

    fn evaluate(&self, mu: &[f64]) -> Result<Vec<f64>> {
        let mat = MaterialParams::from_vector(mu, self.density)?;
        let (traj, _) = self.solver.solve(&mat)?;
        Ok(self.probes.iter().map(|p| traj.displacements[(p.dof, p.column)]).collect())
    }
}

/// Probe values of a reduced model: `V[dof, :] · q̂(t, μ)` at each probe time.
pub struct RomModel {
    pub rom: Rom,
    pub probes: Vec<SnappedProbe>,
    /// Time of every trajectory column the probes may refer to.
    pub times: Vec<f64>,
}

impl RomModel {
    pub fn new(rom: Rom, probes: Vec<SnappedProbe>, times: Vec<f64>) -> Result<Self> {
        for p in &probes {
            if p.column >= times.len() {
                return Err(Error::OutOfRange { index: p.column, len: times.len() });
            }
            if p.dof >= rom.basis().n_h() {
                return Err(Error::OutOfRange { index: p.dof, len: rom.basis().n_h() });
            }
        }
        Ok(Self { rom, probes, times })
    }
}

impl Model for RomModel {
    fn n_inputs(&self) -> usize {
        self.rom.design().n_params()
    }

    fn n_outputs(&self) -> usize {
        self.probes.len()
    }

    fn evaluate(&self, mu: &[f64]) -> Result<Vec<f64>> {
        let mut columns: Vec<usize> = self.probes.iter().map(|p| p.column).collect();
        columns.sort_unstable();
        columns.dedup();
        let times: Vec<f64> = columns.iter().map(|&c| self.times[c]).collect();
        let q = self.rom.predict_trajectory(mu, &times)?;
        let v = &self.rom.basis().v;
        Ok(self
            .probes
            .iter()
            .map(|p| {
                let k = columns.binary_search(&p.column).unwrap();
                v.row(p.dof).iter().zip(q.column(k).iter()).map(|(a, b)| a * b).sum()
            })
            .collect())
    }
}

#[cfg(test)]
mod tests {
    use super::*;

    #[test]
    fn rows_are_evaluated_in_order() {
        let m = FnModel::new(2, 1, |x: &[f64]| vec![x[0] + 10.0 * x[1]]);
        let design = DMatrix::from_row_slice(3, 2, &[1.0, 0.0, 0.0, 1.0, 2.0, 2.0]);
        let out = m.evaluate_rows(&design).unwrap();
        assert_eq!(out.as_slice(), &[1.0, 10.0, 22.0]);
        assert!(m.evaluate_rows(&DMatrix::zeros(1, 3)).is_err());
    }

    #[test]
    fn fom_model_reads_the_probes() {
        use crate::fom::{extract_qoi, FomConfig, Mesh, Probe};
        let mesh = Mesh::beam(3, 1, 1, 1e-2, 1e-3, 1e-3).unwrap();
        let config = FomConfig { t_final: 0.05, ..FomConfig::default() };
        let solver = FomSolver::new(mesh.clone(), config).unwrap();
        let probes: Vec<Probe> = [4, 10].iter().map(|&step| Probe { point: [1e-2, 1e-3, 1e-3], component: 2, step }).collect();
        let snapped = probes.iter().map(|p| p.snap(&mesh, 10).unwrap()).collect();
        let model = FomModel { solver, probes: snapped, density: crate::fom::material::DEFAULT_DENSITY };
        let mu = MaterialParams { p_tilde: 0.004, ..MaterialParams::reference() }.to_vector();
        let y = model.evaluate(&mu).unwrap();
        let traj = model.solver.solve(&MaterialParams::from_vector(&mu, 1e3).unwrap()).unwrap().0;
        for (p, v) in probes.iter().zip(&y) {
            assert_eq!(*v, extract_qoi(&traj, &mesh, p).unwrap().0);
        }
        assert!(y[1] > y[0] && y[0] > 0.0);
    }

    #[test]
    fn rom_model_reconstructs_probe_values() {
        use crate::fom::SnappedProbe;
        use crate::pod::{CoefficientTable, PodCriterion, ReducedBasis};
        use crate::rom::{train_td_rom, TdConfig};
        let raw = DMatrix::from_fn(12, 4, |i, j| ((i * 5 + j * 3) as f64 * 0.41).cos());
        let basis = ReducedBasis::build(&raw, PodCriterion::Fixed(2)).unwrap();
        let times: Vec<f64> = (1..=6).map(|k| k as f64 * 0.1).collect();
        let params = DMatrix::from_row_slice(5, 1, &[0.0, 0.3, 0.5, 0.8, 1.0]);
        let q = DMatrix::from_fn(2, 30, |l, c| (times[c % 6] * (1.0 + l as f64)).sin() * (1.0 + params[(c / 6, 0)]));
        let table = CoefficientTable::new(q, 6, 5).unwrap();
        let rom = Rom::Td(train_td_rom(&basis, &table, &times, &params, &TdConfig::default(), 1).unwrap());
        let probe = |dof, column| SnappedProbe { vertex: dof / 3, coordinates: [0.0; 3], distance: 0.0, dof, column };
        let model = RomModel::new(rom, vec![probe(7, 2), probe(3, 5), probe(7, 5)], times.clone()).unwrap();
        let y = model.evaluate(&[0.4]).unwrap();
        for (p, v) in model.probes.iter().zip(&y) {
            let field = model.rom.predict(times[p.column], &[0.4]).unwrap().field(model.rom.basis());
            assert!((field[p.dof] - v).abs() < 1e-8 * v.abs().max(1.0));
        }
        assert!(RomModel::new(model.rom.clone(), vec![probe(40, 0)], times).is_err());
    }
}
