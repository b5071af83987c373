//! Guccione-type strain energy with a volumetric penalty.
//!
//! `W(F) = C/2 (exp(Q(E)) - 1) + K/2 (J - 1) ln J`, with
//! `Q = Σ_ij B_ij E_ij²` in the fixed material frame (x = fibre, y = sheet,
//! z = normal) and `B` the symmetric matrix of the `b_*` exponents.

use nalgebra::{Matrix3, SMatrix};
use serde::{Deserialize, Serialize};

use crate::error::{Error, Result};

/// Fourth-order tangent `∂P_iJ/∂F_kL` flattened to 9×9, index `3 i + J`.
pub type Tangent = SMatrix<f64, 9, 9>;

#[derive(Debug, Clone, Copy, PartialEq, Serialize, Deserialize)]
pub struct MaterialParams {
    pub b_f: f64,
    pub b_s: f64,
    pub b_n: f64,
    pub b_fs: f64,
    pub b_fn: f64,
    pub b_sn: f64,
    /// Bulk modulus (kPa).
    #[serde(rename = "K")]
    pub bulk_modulus: f64,
    /// Scaling constant of the exponential term (kPa).
    #[serde(rename = "C")]
    pub c: f64,
    /// Slope of the ramped pressure load (kPa).
    pub p_tilde: f64,
    /// Density (kg/m³).
    pub rho: f64,
}

pub const DEFAULT_DENSITY: f64 = 1.0e3;

impl MaterialParams {
    /// Builds parameters from a vector ordered `[b_f, b_s, b_n, b_fs, b_fn, b_sn, K, C, p_tilde]`.
    pub fn from_vector(mu: &[f64], rho: f64) -> Result<Self> {
        if mu.len() != 9 {
            return Err(Error::DimensionMismatch { expected: 9, found: mu.len() });
        }
        let m = Self {
            b_f: mu[0],
            b_s: mu[1],
            b_n: mu[2],
            b_fs: mu[3],
            b_fn: mu[4],
            b_sn: mu[5],
            bulk_modulus: mu[6],
            c: mu[7],
            p_tilde: mu[8],
            rho,
        };
        m.validate()?;
        Ok(m)
    }

    pub fn to_vector(&self) -> [f64; 9] {
        [
            self.b_f,
            self.b_s,
            self.b_n,
            self.b_fs,
            self.b_fn,
            self.b_sn,
            self.bulk_modulus,
            self.c,
            self.p_tilde,
        ]
    }

    /// The reference beam material with zero load.
    pub fn reference() -> Self {
        Self {
            b_f: 8.0,
            b_s: 2.0,
            b_n: 2.0,
            b_fs: 4.0,
            b_fn: 4.0,
            b_sn: 2.0,
            bulk_modulus: 50.0,
            c: 2.0,
            p_tilde: 0.0,
            rho: DEFAULT_DENSITY,
        }
    }

    pub fn validate(&self) -> Result<()> {
        let exps = [self.b_f, self.b_s, self.b_n, self.b_fs, self.b_fn, self.b_sn];
        if exps.iter().any(|b| !(*b > 0.0)) {
            return Err(Error::InvalidConfig("all b_* exponents must be positive".into()));
        }
        if !(self.c > 0.0) || !(self.bulk_modulus > 0.0) || !(self.rho > 0.0) {
            return Err(Error::InvalidConfig("C, K and rho must be positive".into()));
        }
        if !self.p_tilde.is_finite() {
            return Err(Error::InvalidConfig("pressure slope must be finite".into()));
        }
        Ok(())
    }

    fn exponents(&self) -> Matrix3<f64> {
        Matrix3::new(
            self.b_f, self.b_fs, self.b_fn, //
            self.b_fs, self.b_s, self.b_sn, //
            self.b_fn, self.b_sn, self.b_n,
        )
    }
}

fn green_lagrange(f: &Matrix3<f64>) -> Matrix3<f64> {
    0.5 * (f.transpose() * f - Matrix3::identity())
}

fn checked_det(f: &Matrix3<f64>) -> Result<f64> {
    let j = f.determinant();
    if !(j > 0.0) {
        return Err(Error::SingularDeformation { det: j, element: None });
    }
    Ok(j)
}

/// Strain energy density, in the units of `C` and `K`.
pub fn strain_energy(f: &Matrix3<f64>, mat: &MaterialParams) -> Result<f64> {
    let j = checked_det(f)?;
    let e = green_lagrange(f);
    let q = mat.exponents().component_mul(&e).dot(&e);
    Ok(0.5 * mat.c * q.exp_m1() + volumetric_energy(j, mat.bulk_modulus))
}

pub fn volumetric_energy(j: f64, bulk_modulus: f64) -> f64 {
    0.5 * bulk_modulus * (j - 1.0) * j.ln()
}

/// First Piola-Kirchhoff stress and its consistent tangent.
pub fn piola_stress(f: &Matrix3<f64>, mat: &MaterialParams) -> Result<(Matrix3<f64>, Tangent)> {
    let j = checked_det(f)?;
    let e = green_lagrange(f);
    let b = mat.exponents();
    let be = b.component_mul(&e);
    let q = be.dot(&e);
    let ceq = mat.c * q.exp();
    // S = C e^Q (B∘E)
    let s = ceq * be;

    let f_inv_t = f
        .try_inverse()
        .ok_or(Error::SingularDeformation { det: j, element: None })?
        .transpose();
    let k = mat.bulk_modulus;
    // W_vol'(J)·J and its derivative in J
    let h = 0.5 * k * (j * j.ln() + j - 1.0);
    let dh = 0.5 * k * (j.ln() + 2.0);

    let p = f * s + h * f_inv_t;

    let mut tangent = Tangent::zeros();
    for kk in 0..3 {
        for l in 0..3 {
            let mut df = Matrix3::zeros();
            df[(kk, l)] = 1.0;
            // dE = sym(Fᵀ dF)
            let ft_df = f.transpose() * df;
            let de = 0.5 * (ft_df + ft_df.transpose());
            let ds = ceq * (b.component_mul(&de) + 2.0 * be.dot(&de) * be);
            let dp_iso = df * s + f * ds;
            let col = 3 * kk + l;
            for i in 0..3 {
                for jj in 0..3 {
                    let vol = dh * j * f_inv_t[(i, jj)] * f_inv_t[(kk, l)] - h * f_inv_t[(i, l)] * f_inv_t[(kk, jj)];
                    tangent[(3 * i + jj, col)] = dp_iso[(i, jj)] + vol;
                }
            }
        }
    }
    Ok((p, tangent))
}
