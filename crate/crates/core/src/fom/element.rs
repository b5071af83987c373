//! Trilinear hexahedron: shape functions, Gauss rules and reference geometry.

use nalgebra::{Matrix3, Vector3};

use crate::error::{Error, Result};
use crate::fom::mesh::NODE_SIGNS;

/// Tensor-product Gauss-Legendre rule on `[-1, 1]³`.
#[derive(Debug, Clone)]
pub struct Quadrature {
    pub points: Vec<[f64; 3]>,
    pub weights: Vec<f64>,
    /// The underlying 1D rule, reused for face integrals.
    pub line: Vec<(f64, f64)>,
}

impl Quadrature {
    pub fn gauss(order: usize) -> Result<Self> {
        let line: Vec<(f64, f64)> = match order {
            1 => vec![(0.0, 2.0)],
            2 => {
                let g = 1.0 / 3f64.sqrt();
                vec![(-g, 1.0), (g, 1.0)]
            }
            3 => {
                let g = (0.6f64).sqrt();
                vec![(-g, 5.0 / 9.0), (0.0, 8.0 / 9.0), (g, 5.0 / 9.0)]
            }
            _ => return Err(Error::InvalidConfig(format!("unsupported quadrature order {order}"))),
        };
        let mut points = Vec::new();
        let mut weights = Vec::new();
        for &(z, wz) in &line {
            for &(y, wy) in &line {
                for &(x, wx) in &line {
                    points.push([x, y, z]);
                    weights.push(wx * wy * wz);
                }
            }
        }
        Ok(Self { points, weights, line })
    }
}

pub fn shape_values(xi: [f64; 3]) -> [f64; 8] {
    std::array::from_fn(|a| {
        let s = NODE_SIGNS[a];
        0.125 * (1.0 + s[0] * xi[0]) * (1.0 + s[1] * xi[1]) * (1.0 + s[2] * xi[2])
    })
}

/// Derivatives with respect to the reference coordinates.
pub fn shape_gradients(xi: [f64; 3]) -> [Vector3<f64>; 8] {
    std::array::from_fn(|a| {
        let s = NODE_SIGNS[a];
        let f = [1.0 + s[0] * xi[0], 1.0 + s[1] * xi[1], 1.0 + s[2] * xi[2]];
        0.125 * Vector3::new(s[0] * f[1] * f[2], s[1] * f[0] * f[2], s[2] * f[0] * f[1])
    })
}

/// Reference-configuration data of one element at every quadrature point.
#[derive(Debug, Clone)]
pub struct ElementGeometry {
    /// Material gradients ∇_X N_a per quadrature point.
    pub grads: Vec<[Vector3<f64>; 8]>,
    pub values: Vec<[f64; 8]>,
    /// Quadrature weight times det(∂X/∂ξ).
    pub dvol: Vec<f64>,
}

impl ElementGeometry {
    pub fn new(coords: &[Vector3<f64>; 8], quad: &Quadrature) -> Result<Self> {
        let n = quad.points.len();
        let mut grads = Vec::with_capacity(n);
        let mut values = Vec::with_capacity(n);
        let mut dvol = Vec::with_capacity(n);
        for (xi, w) in quad.points.iter().zip(&quad.weights) {
            let dn = shape_gradients(*xi);
            // jac[(i, r)] = ∂X_i/∂ξ_r
            let mut jac = Matrix3::zeros();
            for a in 0..8 {
                jac += coords[a] * dn[a].transpose();
            }
            let det = jac.determinant();
            if !(det > 0.0) {
                return Err(Error::SingularDeformation { det, element: None });
            }
            let inv_t = jac.try_inverse().unwrap().transpose();
            grads.push(std::array::from_fn(|a| inv_t * dn[a]));
            values.push(shape_values(*xi));
            dvol.push(w * det);
        }
        Ok(Self { grads, values, dvol })
    }

    pub fn volume(&self) -> f64 {
        self.dvol.iter().sum()
    }

    /// Scalar consistent mass `∫ N_a N_b dV` (density excluded).
    pub fn mass(&self) -> [[f64; 8]; 8] {
        let mut m = [[0.0; 8]; 8];
        for (nv, dv) in self.values.iter().zip(&self.dvol) {
            for a in 0..8 {
                for b in 0..8 {
                    m[a][b] += nv[a] * nv[b] * dv;
                }
            }
        }
        m
    }
}

/// Reference point on local face `face` for in-face coordinates `(s, t)`,
/// together with the two in-face axes ordered so that `x_{,a} × x_{,b}` points
/// along `+axis`.
pub fn face_point(face: usize, s: f64, t: f64) -> ([f64; 3], usize, usize) {
    let axis = face / 2;
    let sign = if face % 2 == 0 { -1.0 } else { 1.0 };
    let a = (axis + 1) % 3;
    let b = (axis + 2) % 3;
    let mut xi = [0.0; 3];
    xi[axis] = sign;
    xi[a] = s;
    xi[b] = t;
    (xi, a, b)
}

#[cfg(test)]
mod tests {
    use super::*;

    fn unit_cube() -> [Vector3<f64>; 8] {
        std::array::from_fn(|a| {
            let s = NODE_SIGNS[a];
            Vector3::new(0.5 * (s[0] + 1.0), 0.5 * (s[1] + 1.0), 0.5 * (s[2] + 1.0))
        })
    }

    #[test]
    fn partition_of_unity() {
        let xi = [0.3, -0.7, 0.1];
        let n = shape_values(xi);
        assert!((n.iter().sum::<f64>() - 1.0).abs() < 1e-15);
        let g = shape_gradients(xi);
        let total: Vector3<f64> = g.iter().sum();
        assert!(total.norm() < 1e-15);
    }

    #[test]
    fn gradients_match_finite_differences() {
        let xi = [0.2, 0.4, -0.3];
        let g = shape_gradients(xi);
        let h = 1e-7;
        for r in 0..3 {
            let mut p = xi;
            let mut m = xi;
            p[r] += h;
            m[r] -= h;
            let (np, nm) = (shape_values(p), shape_values(m));
            for a in 0..8 {
                assert!(((np[a] - nm[a]) / (2.0 * h) - g[a][r]).abs() < 1e-9);
            }
        }
    }

    #[test]
    fn volume_and_mass_of_box() {
        let coords: [Vector3<f64>; 8] = unit_cube().map(|c| Vector3::new(2.0 * c.x, 0.5 * c.y, c.z));
        for order in 1..=3 {
            let geo = ElementGeometry::new(&coords, &Quadrature::gauss(order).unwrap()).unwrap();
            assert!((geo.volume() - 1.0).abs() < 1e-14);
        }
        let geo = ElementGeometry::new(&coords, &Quadrature::gauss(2).unwrap()).unwrap();
        let total: f64 = geo.mass().iter().flatten().sum();
        assert!((total - 1.0).abs() < 1e-14);
        // the consistent mass of a box has diagonal V/27
        assert!((geo.mass()[0][0] - 1.0 / 27.0).abs() < 1e-14);
    }

    #[test]
    fn linear_field_gradient_is_exact() {
        let coords: [Vector3<f64>; 8] = unit_cube().map(|c| Vector3::new(3.0 * c.x, c.y, 2.0 * c.z));
        let geo = ElementGeometry::new(&coords, &Quadrature::gauss(2).unwrap()).unwrap();
        let f = |x: &Vector3<f64>| 1.0 + 2.0 * x.x - x.y + 0.5 * x.z;
        for grads in &geo.grads {
            let g: Vector3<f64> = (0..8).map(|a| f(&coords[a]) * grads[a]).sum();
            assert!((g - Vector3::new(2.0, -1.0, 0.5)).norm() < 1e-13);
        }
    }

    #[test]
    fn face_axes_are_outward_oriented() {
        let coords = unit_cube();
        for face in 0..6 {
            let (xi, a, b) = face_point(face, 0.0, 0.0);
            let dn = shape_gradients(xi);
            let ta: Vector3<f64> = (0..8).map(|n| dn[n][a] * coords[n]).sum();
            let tb: Vector3<f64> = (0..8).map(|n| dn[n][b] * coords[n]).sum();
            let normal = ta.cross(&tb);
            let axis = face / 2;
            assert!(normal[axis] > 0.0);
        }
    }
}
