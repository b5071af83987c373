//! Hexahedral meshes with tagged boundary faces.
//!
//! Local node numbering follows the usual trilinear convention: node `a` sits
//! at reference coordinates `NODE_SIGNS[a]` in `[-1, 1]³`. Local face `f` is
//! the face where reference axis `f / 2` equals `-1` (even `f`) or `+1` (odd).

use std::collections::HashMap;
use std::path::Path;

use nalgebra::Vector3;
use serde::{Deserialize, Serialize};

use crate::error::{Error, Result};
use crate::fom::element::{Quadrature, ElementGeometry};

pub const NODE_SIGNS: [[f64; 3]; 8] = [
    [-1.0, -1.0, -1.0],
    [1.0, -1.0, -1.0],
    [1.0, 1.0, -1.0],
    [-1.0, 1.0, -1.0],
    [-1.0, -1.0, 1.0],
    [1.0, -1.0, 1.0],
    [1.0, 1.0, 1.0],
    [-1.0, 1.0, 1.0],
];

#[derive(Debug, Clone, Copy, PartialEq, Eq, Hash, Serialize, Deserialize)]
#[serde(rename_all = "lowercase")]
pub enum BoundaryTag {
    Dirichlet,
    Pressure,
    Neumann,
}

#[derive(Debug, Clone, Copy, PartialEq, Eq, Serialize, Deserialize)]
pub struct BoundaryFace {
    pub element: usize,
    pub face: usize,
    pub tag: BoundaryTag,
}

#[derive(Debug, Clone, PartialEq, Serialize, Deserialize)]
pub struct Mesh {
    /// Vertex coordinates in metres.
    pub vertices: Vec<[f64; 3]>,
    pub hexahedra: Vec<[usize; 8]>,
    pub boundary: Vec<BoundaryFace>,
}

/// Local node indices lying on local face `face`.
pub fn face_nodes(face: usize) -> [usize; 4] {
    let axis = face / 2;
    let sign = if face % 2 == 0 { -1.0 } else { 1.0 };
    let mut out = [0; 4];
    let mut n = 0;
    for (a, s) in NODE_SIGNS.iter().enumerate() {
        if s[axis] == sign {
            out[n] = a;
            n += 1;
        }
    }
    out
}

impl Mesh {
    pub fn n_vertices(&self) -> usize {
        self.vertices.len()
    }

    pub fn n_dofs(&self) -> usize {
        3 * self.vertices.len()
    }

    /// Structured box mesh of `[0, lx] × [0, ly] × [0, lz]`.
    ///
    /// Faces on `x = 0` are clamped, faces on `z = 0` carry the pressure and all
    /// other exterior faces are traction free. Vertices are numbered with `z`
    /// fastest and `x` slowest, which keeps the stiffness band narrow for
    /// beams elongated along `x`.
    pub fn beam(nx: usize, ny: usize, nz: usize, lx: f64, ly: f64, lz: f64) -> Result<Self> {
        if nx == 0 || ny == 0 || nz == 0 {
            return Err(Error::InvalidMesh("element counts must be positive".into()));
        }
        let vid = |i: usize, j: usize, k: usize| k + (nz + 1) * (j + (ny + 1) * i);
        let mut vertices = Vec::with_capacity((nx + 1) * (ny + 1) * (nz + 1));
        for i in 0..=nx {
            for j in 0..=ny {
                for k in 0..=nz {
                    vertices.push([
                        lx * i as f64 / nx as f64,
                        ly * j as f64 / ny as f64,
                        lz * k as f64 / nz as f64,
                    ]);
                }
            }
        }
        let mut hexahedra = Vec::with_capacity(nx * ny * nz);
        let mut boundary = Vec::new();
        for i in 0..nx {
            for j in 0..ny {
                for k in 0..nz {
                    let e = hexahedra.len();
                    let mut conn = [0; 8];
                    for (a, s) in NODE_SIGNS.iter().enumerate() {
                        let di = (s[0] > 0.0) as usize;
                        let dj = (s[1] > 0.0) as usize;
                        let dk = (s[2] > 0.0) as usize;
                        conn[a] = vid(i + di, j + dj, k + dk);
                    }
                    hexahedra.push(conn);
                    let on = [i == 0, i + 1 == nx, j == 0, j + 1 == ny, k == 0, k + 1 == nz];
                    for (face, &exterior) in on.iter().enumerate() {
                        if exterior {
                            let tag = match face {
                                0 => BoundaryTag::Dirichlet,
                                4 => BoundaryTag::Pressure,
                                _ => BoundaryTag::Neumann,
                            };
                            boundary.push(BoundaryFace { element: e, face, tag });
                        }
                    }
                }
            }
        }
        let mesh = Self { vertices, hexahedra, boundary };
        mesh.validate()?;
        Ok(mesh)
    }

    /// The default desk-scale beam: 10×2×2 elements on 1 cm × 1 mm × 1 mm.
    pub fn default_beam() -> Self {
        Self::beam(10, 2, 2, 1e-2, 1e-3, 1e-3).expect("default beam mesh is valid")
    }

    pub fn from_json_file(path: &Path) -> Result<Self> {
        let mesh: Mesh = crate::container::read_json(path)?;
        mesh.validate()?;
        Ok(mesh)
    }

    pub fn element_coords(&self, e: usize) -> [Vector3<f64>; 8] {
        let conn = &self.hexahedra[e];
        std::array::from_fn(|a| Vector3::from(self.vertices[conn[a]]))
    }

    /// Checks connectivity, element orientation and the boundary tagging.
    pub fn validate(&self) -> Result<()> {
        let nv = self.vertices.len();
        let quad = Quadrature::gauss(2)?;
        for (e, conn) in self.hexahedra.iter().enumerate() {
            for (a, &v) in conn.iter().enumerate() {
                if v >= nv {
                    return Err(Error::InvalidMesh(format!("element {e} references missing vertex {v}")));
                }
                if conn[..a].contains(&v) {
                    return Err(Error::InvalidMesh(format!("element {e} repeats vertex {v}")));
                }
            }
            ElementGeometry::new(&self.element_coords(e), &quad)
                .map_err(|_| Error::InvalidMesh(format!("element {e} has a non-positive Jacobian")))?;
        }

        // exterior faces are the ones referenced by exactly one element
        let mut owners: HashMap<[usize; 4], Vec<(usize, usize)>> = HashMap::new();
        for (e, conn) in self.hexahedra.iter().enumerate() {
            for face in 0..6 {
                owners.entry(face_key(conn, face)).or_default().push((e, face));
            }
        }
        let mut tagged: HashMap<(usize, usize), BoundaryTag> = HashMap::new();
        for bf in &self.boundary {
            if bf.element >= self.hexahedra.len() || bf.face >= 6 {
                return Err(Error::InvalidMesh(format!(
                    "boundary entry ({}, {}) out of range",
                    bf.element, bf.face
                )));
            }
            if tagged.insert((bf.element, bf.face), bf.tag).is_some() {
                return Err(Error::InvalidMesh(format!(
                    "face {} of element {} tagged twice",
                    bf.face, bf.element
                )));
            }
        }
        for (key, faces) in &owners {
            match faces.len() {
                1 => {
                    if !tagged.contains_key(&faces[0]) {
                        return Err(Error::InvalidMesh(format!("exterior face {key:?} carries no tag")));
                    }
                }
                2 => {
                    if faces.iter().any(|f| tagged.contains_key(f)) {
                        return Err(Error::InvalidMesh(format!("interior face {key:?} is tagged")));
                    }
                }
                n => return Err(Error::InvalidMesh(format!("face {key:?} shared by {n} elements"))),
            }
        }
        Ok(())
    }

    /// Vertices on Dirichlet faces, sorted.
    pub fn dirichlet_vertices(&self) -> Vec<usize> {
        let mut out: Vec<usize> = self
            .boundary
            .iter()
            .filter(|bf| bf.tag == BoundaryTag::Dirichlet)
            .flat_map(|bf| face_nodes(bf.face).map(|a| self.hexahedra[bf.element][a]))
            .collect();
        out.sort_unstable();
        out.dedup();
        out
    }

    pub fn faces_with(&self, tag: BoundaryTag) -> impl Iterator<Item = &BoundaryFace> {
        self.boundary.iter().filter(move |bf| bf.tag == tag)
    }

    /// Nearest vertex to `point` and its distance.
    pub fn nearest_vertex(&self, point: [f64; 3]) -> (usize, f64) {
        let p = Vector3::from(point);
        self.vertices
            .iter()
            .enumerate()
            .map(|(i, v)| (i, (Vector3::from(*v) - p).norm()))
            .fold((0, f64::INFINITY), |best, cur| if cur.1 < best.1 { cur } else { best })
    }

    /// Stable content hash, recorded in trajectory provenance.
    pub fn content_hash(&self) -> String {
        let bytes = serde_json::to_vec(self).expect("mesh serializes");
        crate::seeds::sha256_hex(&bytes)
    }
}

fn face_key(conn: &[usize; 8], face: usize) -> [usize; 4] {
    let mut key = face_nodes(face).map(|a| conn[a]);
    key.sort_unstable();
    key
}
