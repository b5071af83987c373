//! Full-order model: Q1 finite elements for nonlinear elastodynamics.
//!
//! Each time step solves
//! `ρ/Δt² M (uⁿ - 2uⁿ⁻¹ + uⁿ⁻²) + N(uⁿ) - F_ext(uⁿ, tⁿ) = 0`
//! by Newton's method, starting from `uⁿ⁻¹`, with `u⁻¹ = u⁰ = 0`. The
//! external force is a follower pressure `p(t) = p̃ t / T` acting on the
//! faces tagged [`BoundaryTag::Pressure`]. Material constants are given in
//! kPa and converted to Pa, so forces are in newtons and displacements in
//! metres.

pub mod banded;
pub mod element;
pub mod material;
pub mod mesh;

use std::path::Path;

use nalgebra::{DMatrix, DVector, Matrix3, Vector3};
use serde::{Deserialize, Serialize};

use crate::container;
use crate::error::{Error, Result};
use banded::BandMatrix;
use element::{face_point, shape_gradients, shape_values, ElementGeometry, Quadrature};
pub use material::{piola_stress, strain_energy, MaterialParams, Tangent};
pub use mesh::{BoundaryFace, BoundaryTag, Mesh};

const KPA: f64 = 1.0e3;

#[derive(Debug, Clone, Copy, PartialEq, Serialize, Deserialize)]
#[serde(default)]
pub struct FomConfig {
    /// Time step (s).
    pub dt: f64,
    /// Final time (s), an integer multiple of `dt`.
    pub t_final: f64,
    /// Absolute tolerance on the residual 2-norm (N).
    pub newton_tol: f64,
    pub newton_max_iter: usize,
    /// Gauss points per direction.
    pub quadrature_order: usize,
}

impl Default for FomConfig {
    fn default() -> Self {
        Self {
            dt: 0.005,
            t_final: 0.25,
            newton_tol: 1e-8,
            newton_max_iter: 25,
            quadrature_order: 2,
        }
    }
}

impl FomConfig {
    pub fn n_steps(&self) -> Result<usize> {
        if !(self.dt > 0.0) || !(self.t_final > 0.0) {
            return Err(Error::InvalidConfig("dt and t_final must be positive".into()));
        }
        let n = (self.t_final / self.dt).round();
        if n < 1.0 || (n * self.dt - self.t_final).abs() > 1e-9 * self.t_final {
            return Err(Error::InvalidConfig(format!(
                "t_final = {} is not an integer multiple of dt = {}",
                self.t_final, self.dt
            )));
        }
        Ok(n as usize)
    }

    /// The time grid `t¹ … t^{N_t}`.
    pub fn times(&self) -> Result<Vec<f64>> {
        Ok((1..=self.n_steps()?).map(|n| n as f64 * self.dt).collect())
    }
}

/// Displacement history, one column per time step.
#[derive(Debug, Clone, PartialEq)]
pub struct Trajectory {
    pub displacements: DMatrix<f64>,
    pub times: Vec<f64>,
    pub dt: f64,
}

impl Trajectory {
    pub fn n_dofs(&self) -> usize {
        self.displacements.nrows()
    }

    pub fn n_steps(&self) -> usize {
        self.displacements.ncols()
    }

    pub fn write(&self, path: &Path) -> Result<()> {
        container::write_matrix(path, &self.displacements, self.dt)
    }

    pub fn read(path: &Path) -> Result<Self> {
        let (displacements, dt) = container::read_matrix(path)?;
        let times = (1..=displacements.ncols()).map(|n| n as f64 * dt).collect();
        Ok(Self { displacements, times, dt })
    }
}

/// JSON sidecar stored next to a trajectory container.
#[derive(Debug, Clone, PartialEq, Serialize, Deserialize)]
pub struct TrajectoryMeta {
    pub mu: MaterialParams,
    pub n_h: usize,
    pub n_t: usize,
    pub dt: f64,
    pub seed: u64,
    pub mesh_hash: String,
}

/// Per-step Newton residual norms, starting with the residual of the initial guess.
#[derive(Debug, Clone, Default, PartialEq)]
pub struct SolveReport {
    pub residual_history: Vec<Vec<f64>>,
}

impl SolveReport {
    pub fn total_iterations(&self) -> usize {
        self.residual_history.iter().map(|h| h.len() - 1).sum()
    }
}

struct PressureFace {
    element: usize,
    face: usize,
}

/// Precomputed discretization of one mesh, reusable across parameter values.
pub struct FomSolver {
    mesh: Mesh,
    config: FomConfig,
    quad: Quadrature,
    geometry: Vec<ElementGeometry>,
    mass: Vec<[[f64; 8]; 8]>,
    free: Vec<Option<usize>>,
    n_free: usize,
    bandwidth: usize,
    pressure_faces: Vec<PressureFace>,
}

impl FomSolver {
    pub fn new(mesh: Mesh, config: FomConfig) -> Result<Self> {
        config.n_steps()?;
        if config.newton_max_iter == 0 || !(config.newton_tol >= 0.0) {
            return Err(Error::InvalidConfig("Newton settings out of range".into()));
        }
        mesh.validate()?;
        let quad = Quadrature::gauss(config.quadrature_order)?;
        let geometry = (0..mesh.hexahedra.len())
            .map(|e| {
                ElementGeometry::new(&mesh.element_coords(e), &quad)
                    .map_err(|_| Error::InvalidMesh(format!("element {e} has a non-positive Jacobian")))
            })
            .collect::<Result<Vec<_>>>()?;
        let mass = geometry.iter().map(ElementGeometry::mass).collect();

        let mut free = vec![None; mesh.n_dofs()];
        let clamped = mesh.dirichlet_vertices();
        let mut n_free = 0;
        for v in 0..mesh.n_vertices() {
            if clamped.binary_search(&v).is_err() {
                for i in 0..3 {
                    free[3 * v + i] = Some(n_free);
                    n_free += 1;
                }
            }
        }
        let mut bandwidth = 0;
        for conn in &mesh.hexahedra {
            let idx: Vec<usize> = conn
                .iter()
                .flat_map(|&v| (0..3).filter_map(move |i| Some(3 * v + i)))
                .filter_map(|g| free[g])
                .collect();
            if let (Some(lo), Some(hi)) = (idx.iter().min(), idx.iter().max()) {
                bandwidth = bandwidth.max(hi - lo);
            }
        }
        let pressure_faces = mesh
            .faces_with(BoundaryTag::Pressure)
            .map(|bf| PressureFace { element: bf.element, face: bf.face })
            .collect();
        Ok(Self {
            mesh,
            config,
            quad,
            geometry,
            mass,
            free,
            n_free,
            bandwidth,
            pressure_faces,
        })
    }

    pub fn mesh(&self) -> &Mesh {
        &self.mesh
    }

    pub fn config(&self) -> &FomConfig {
        &self.config
    }

    pub fn n_free(&self) -> usize {
        self.n_free
    }

    /// Global DOF → index among the unconstrained DOFs.
    pub fn free_index(&self, dof: usize) -> Option<usize> {
        self.free[dof]
    }

    pub fn pressure(&self, mat: &MaterialParams, t: f64) -> f64 {
        mat.p_tilde * KPA * t / self.config.t_final
    }

    /// Residual and tangent of the time-step equation at `t`, restricted to the
    /// unconstrained DOFs. All vectors are full length `N_h`.
    pub fn assemble_system(
        &self,
        u: &DVector<f64>,
        u_prev: &DVector<f64>,
        u_prev2: &DVector<f64>,
        mat: &MaterialParams,
        t: f64,
    ) -> Result<(DVector<f64>, BandMatrix)> {
        self.assemble(u, u_prev, u_prev2, mat, t, true)
            .map(|(r, k)| (r, k.expect("tangent requested")))
    }

    pub fn residual(
        &self,
        u: &DVector<f64>,
        u_prev: &DVector<f64>,
        u_prev2: &DVector<f64>,
        mat: &MaterialParams,
        t: f64,
    ) -> Result<DVector<f64>> {
        self.assemble(u, u_prev, u_prev2, mat, t, false).map(|(r, _)| r)
    }

    fn assemble(
        &self,
        u: &DVector<f64>,
        u_prev: &DVector<f64>,
        u_prev2: &DVector<f64>,
        mat: &MaterialParams,
        t: f64,
        with_tangent: bool,
    ) -> Result<(DVector<f64>, Option<BandMatrix>)> {
        let n_h = self.mesh.n_dofs();
        for v in [u, u_prev, u_prev2] {
            if v.len() != n_h {
                return Err(Error::DimensionMismatch { expected: n_h, found: v.len() });
            }
        }
        let mut res = DVector::zeros(self.n_free);
        let mut tangent = with_tangent.then(|| BandMatrix::zeros(self.n_free, self.bandwidth));
        let inertia = mat.rho / (self.config.dt * self.config.dt);

        for (e, conn) in self.mesh.hexahedra.iter().enumerate() {
            let geo = &self.geometry[e];
            let ue: [Vector3<f64>; 8] = std::array::from_fn(|a| {
                let g = 3 * conn[a];
                Vector3::new(u[g], u[g + 1], u[g + 2])
            });
            let mut fe = [[0.0; 3]; 8];
            let mut ke = [[0.0; 24]; 24];

            for q in 0..geo.dvol.len() {
                let grads = &geo.grads[q];
                let dv = geo.dvol[q];
                let mut f = Matrix3::identity();
                for a in 0..8 {
                    f += ue[a] * grads[a].transpose();
                }
                let (p, a4) = piola_stress(&f, mat).map_err(|err| match err {
                    Error::SingularDeformation { det, .. } => Error::SingularDeformation { det, element: Some(e) },
                    other => other,
                })?;
                for a in 0..8 {
                    let pg = p * grads[a];
                    for i in 0..3 {
                        fe[a][i] += KPA * pg[i] * dv;
                    }
                }
                if with_tangent {
                    accumulate_material_tangent(&mut ke, grads, &a4, KPA * dv);
                }
            }

            // inertia
            let m = &self.mass[e];
            for a in 0..8 {
                for b in 0..8 {
                    let gb = 3 * conn[b];
                    let mab = inertia * m[a][b];
                    for i in 0..3 {
                        fe[a][i] += mab * (u[gb + i] - 2.0 * u_prev[gb + i] + u_prev2[gb + i]);
                        ke[3 * a + i][3 * b + i] += mab;
                    }
                }
            }
            self.scatter(conn, &fe, with_tangent.then_some(&ke), &mut res, tangent.as_mut());
        }

        let pressure = self.pressure(mat, t);
        if pressure != 0.0 {
            for pf in &self.pressure_faces {
                let conn = &self.mesh.hexahedra[pf.element];
                let x: [Vector3<f64>; 8] = std::array::from_fn(|a| {
                    let g = 3 * conn[a];
                    Vector3::from(self.mesh.vertices[conn[a]]) + Vector3::new(u[g], u[g + 1], u[g + 2])
                });
                let (fe, ke) = pressure_face_terms(&x, pf.face, pressure, &self.quad.line);
                self.scatter(conn, &fe, with_tangent.then_some(&ke), &mut res, tangent.as_mut());
            }
        }
        Ok((res, tangent))
    }

    fn scatter(
        &self,
        conn: &[usize; 8],
        fe: &[[f64; 3]; 8],
        ke: Option<&[[f64; 24]; 24]>,
        res: &mut DVector<f64>,
        tangent: Option<&mut BandMatrix>,
    ) {
        let rows: [Option<usize>; 24] = std::array::from_fn(|r| self.free[3 * conn[r / 3] + r % 3]);
        for (r, row) in rows.iter().enumerate() {
            if let Some(i) = row {
                res[*i] += fe[r / 3][r % 3];
            }
        }
        if let (Some(ke), Some(k)) = (ke, tangent) {
            for (r, row) in rows.iter().enumerate() {
                let Some(i) = row else { continue };
                for (c, col) in rows.iter().enumerate() {
                    if let Some(j) = col {
                        k.add(*i, *j, ke[r][c]);
                    }
                }
            }
        }
    }

    /// Integrates the whole trajectory for one parameter value.
    pub fn solve(&self, mat: &MaterialParams) -> Result<(Trajectory, SolveReport)> {
        mat.validate()?;
        let n_h = self.mesh.n_dofs();
        let times = self.config.times()?;
        let mut displacements = DMatrix::zeros(n_h, times.len());
        let mut report = SolveReport::default();
        let mut u_prev2 = DVector::zeros(n_h);
        let mut u_prev = DVector::zeros(n_h);

        for (step, &t) in times.iter().enumerate() {
            let mut u = u_prev.clone();
            let mut history = Vec::new();
            loop {
                let (r, k) = self.assemble_system(&u, &u_prev, &u_prev2, mat, t)?;
                let norm = r.norm();
                history.push(norm);
                if norm <= self.config.newton_tol {
                    break;
                }
                let iterations = history.len() - 1;
                if iterations >= self.config.newton_max_iter || !norm.is_finite() {
                    return Err(Error::NewtonFailure { step: step + 1, iterations, residual: norm });
                }
                let delta = k.solve(&(-r))?;
                for g in 0..n_h {
                    if let Some(i) = self.free[g] {
                        u[g] += delta[i];
                    }
                }
            }
            displacements.set_column(step, &u);
            report.residual_history.push(history);
            u_prev2 = std::mem::replace(&mut u_prev, u);
        }
        Ok((Trajectory { displacements, times, dt: self.config.dt }, report))
    }
}

/// `K[(a,i),(b,k)] += Σ_JL g_aJ A_iJkL g_bL · scale`.
fn accumulate_material_tangent(ke: &mut [[f64; 24]; 24], grads: &[Vector3<f64>; 8], a4: &Tangent, scale: f64) {
    // t[a][i][kL] = Σ_J g_aJ A[iJ][kL]
    let mut t = [[[0.0; 9]; 3]; 8];
    for a in 0..8 {
        for i in 0..3 {
            for c in 0..9 {
                t[a][i][c] = (0..3).map(|jj| grads[a][jj] * a4[(3 * i + jj, c)]).sum();
            }
        }
    }
    for a in 0..8 {
        for i in 0..3 {
            let row = &mut ke[3 * a + i];
            for b in 0..8 {
                for k in 0..3 {
                    let v = t[a][i][3 * k] * grads[b][0] + t[a][i][3 * k + 1] * grads[b][1] + t[a][i][3 * k + 2] * grads[b][2];
                    row[3 * b + k] += scale * v;
                }
            }
        }
    }
}

fn skew(v: &Vector3<f64>) -> Matrix3<f64> {
    Matrix3::new(0.0, -v.z, v.y, v.z, 0.0, -v.x, -v.y, v.x, 0.0)
}

/// Residual contribution `+p ∫ N_a n da` of a follower pressure on one face and
/// its derivative with respect to the element displacements.
fn pressure_face_terms(
    x: &[Vector3<f64>; 8],
    face: usize,
    pressure: f64,
    line: &[(f64, f64)],
) -> ([[f64; 3]; 8], [[f64; 24]; 24]) {
    let sign = if face % 2 == 0 { -1.0 } else { 1.0 };
    let mut fe = [[0.0; 3]; 8];
    let mut ke = [[0.0; 24]; 24];
    for &(s, ws) in line {
        for &(tt, wt) in line {
            let (xi, ax, bx) = face_point(face, s, tt);
            let dn = shape_gradients(xi);
            let nv = shape_values(xi);
            let mut xa = Vector3::zeros();
            let mut xb = Vector3::zeros();
            for n in 0..8 {
                xa += dn[n][ax] * x[n];
                xb += dn[n][bx] * x[n];
            }
            let w = ws * wt * pressure * sign;
            let normal = xa.cross(&xb);
            let (skew_a, skew_b) = (skew(&xa), skew(&xb));
            for a in 0..8 {
                if nv[a] == 0.0 {
                    continue;
                }
                for i in 0..3 {
                    fe[a][i] += w * nv[a] * normal[i];
                }
                for b in 0..8 {
                    let d = dn[b][bx] * skew_a - dn[b][ax] * skew_b;
                    if d.iter().all(|v| *v == 0.0) {
                        continue;
                    }
                    for i in 0..3 {
                        for k in 0..3 {
                            ke[3 * a + i][3 * b + k] += w * nv[a] * d[(i, k)];
                        }
                    }
                }
            }
        }
    }
    (fe, ke)
}

/// Convenience wrapper building a [`FomSolver`] for a single solve.
pub fn solve_fom(mat: &MaterialParams, mesh: &Mesh, config: &FomConfig) -> Result<Trajectory> {
    FomSolver::new(mesh.clone(), *config)?.solve(mat).map(|(t, _)| t)
}

/// Where and what to read from a trajectory.
#[derive(Debug, Clone, Copy, PartialEq, Serialize, Deserialize)]
pub struct Probe {
    /// Reference coordinates (m); snapped to the nearest vertex.
    pub point: [f64; 3],
    /// 0 = x, 1 = y, 2 = z.
    pub component: usize,
    /// 1-based time-step index `n`, i.e. `t = n Δt`.
    pub step: usize,
}

#[derive(Debug, Clone, Copy, PartialEq)]
pub struct SnappedProbe {
    pub vertex: usize,
    pub coordinates: [f64; 3],
    pub distance: f64,
    pub dof: usize,
    pub column: usize,
}

impl Probe {
    pub fn snap(&self, mesh: &Mesh, n_steps: usize) -> Result<SnappedProbe> {
        if self.component > 2 {
            return Err(Error::OutOfRange { index: self.component, len: 3 });
        }
        if self.step == 0 || self.step > n_steps {
            return Err(Error::OutOfRange { index: self.step, len: n_steps });
        }
        let (vertex, distance) = mesh.nearest_vertex(self.point);
        Ok(SnappedProbe {
            vertex,
            coordinates: mesh.vertices[vertex],
            distance,
            dof: 3 * vertex + self.component,
            column: self.step - 1,
        })
    }
}

/// Displacement component at a probe vertex and step, with the snapped location.
pub fn extract_qoi(traj: &Trajectory, mesh: &Mesh, probe: &Probe) -> Result<(f64, SnappedProbe)> {
    if traj.n_dofs() != mesh.n_dofs() {
        return Err(Error::DimensionMismatch { expected: mesh.n_dofs(), found: traj.n_dofs() });
    }
    let snapped = probe.snap(mesh, traj.n_steps())?;
    Ok((traj.displacements[(snapped.dof, snapped.column)], snapped))
}

/// The beam tip probe `(1 cm, 0.5 mm, 0.5 mm)` in the z direction at steps 10, 30 and 50.
pub fn beam_tip_probes() -> Vec<Probe> {
    [10, 30, 50]
        .into_iter()
        .map(|step| Probe { point: [1e-2, 5e-4, 5e-4], component: 2, step })
        .collect()
}
