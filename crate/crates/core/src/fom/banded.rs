//! Banded storage and LU factorization for the FOM tangent.
//!
//! The structured beam meshes give tangents with a narrow symmetric band, so
//! factorizing in band storage is the cheap direct route. Pivoting is not
//! performed; a vanishing pivot makes [`BandMatrix::solve`] fall back to a
//! dense partially-pivoted LU.

use nalgebra::{DMatrix, DVector};

use crate::error::{Error, Result};

#[derive(Debug, Clone)]
pub struct BandMatrix {
    n: usize,
    bw: usize,
    data: Vec<f64>,
}

impl BandMatrix {
    pub fn zeros(n: usize, bw: usize) -> Self {
        let bw = bw.min(n.saturating_sub(1));
        Self { n, bw, data: vec![0.0; n * (2 * bw + 1)] }
    }

    pub fn dim(&self) -> usize {
        self.n
    }

    pub fn bandwidth(&self) -> usize {
        self.bw
    }

    #[inline]
    fn idx(&self, i: usize, j: usize) -> usize {
        debug_assert!(i.abs_diff(j) <= self.bw, "({i}, {j}) outside band {}", self.bw);
        i * (2 * self.bw + 1) + (j + self.bw - i)
    }

    #[inline]
    pub fn add(&mut self, i: usize, j: usize, v: f64) {
        let k = self.idx(i, j);
        self.data[k] += v;
    }

    pub fn get(&self, i: usize, j: usize) -> f64 {
        if i.abs_diff(j) > self.bw {
            0.0
        } else {
            self.data[self.idx(i, j)]
        }
    }

    pub fn to_dense(&self) -> DMatrix<f64> {
        DMatrix::from_fn(self.n, self.n, |i, j| self.get(i, j))
    }

    /// Solves `A x = b`, consuming the matrix.
    pub fn solve(self, b: &DVector<f64>) -> Result<DVector<f64>> {
        if b.len() != self.n {
            return Err(Error::DimensionMismatch { expected: self.n, found: b.len() });
        }
        let backup = self.clone();
        match self.factorize() {
            Some(lu) => Ok(lu.solve(b)),
            None => backup
                .to_dense()
                .lu()
                .solve(b)
                .ok_or_else(|| Error::LinearSolver("singular tangent matrix".into())),
        }
    }

    fn factorize(mut self) -> Option<BandLu> {
        let n = self.n;
        let bw = self.bw;
        let diag_scale = (0..n).map(|i| self.get(i, i).abs()).fold(0.0, f64::max);
        if diag_scale == 0.0 {
            return None;
        }
        for k in 0..n {
            let pivot = self.data[self.idx(k, k)];
            if pivot.abs() <= 1e-13 * diag_scale {
                return None;
            }
            let end = (k + bw + 1).min(n);
            for i in k + 1..end {
                let ik = self.idx(i, k);
                let l = self.data[ik] / pivot;
                if l == 0.0 {
                    continue;
                }
                self.data[ik] = l;
                for j in k + 1..end {
                    let kj = self.idx(k, j);
                    let ij = self.idx(i, j);
                    self.data[ij] -= l * self.data[kj];
                }
            }
        }
        Some(BandLu { m: self })
    }
}

struct BandLu {
    m: BandMatrix,
}

impl BandLu {
    fn solve(&self, b: &DVector<f64>) -> DVector<f64> {
        let n = self.m.n;
        let bw = self.m.bw;
        let mut x = b.clone();
        for i in 0..n {
            let start = i.saturating_sub(bw);
            let mut s = x[i];
            for j in start..i {
                s -= self.m.data[self.m.idx(i, j)] * x[j];
            }
            x[i] = s;
        }
        for i in (0..n).rev() {
            let end = (i + bw + 1).min(n);
            let mut s = x[i];
            for j in i + 1..end {
                s -= self.m.data[self.m.idx(i, j)] * x[j];
            }
            x[i] = s / self.m.data[self.m.idx(i, i)];
        }
        x
    }
}

#[cfg(test)]
mod tests {
    use super::*;
    use rand::{Rng, SeedableRng};
    use rand_chacha::ChaCha8Rng;

    fn random_band(n: usize, bw: usize, seed: u64, dominant: bool) -> BandMatrix {
        let mut rng = ChaCha8Rng::seed_from_u64(seed);
        let mut m = BandMatrix::zeros(n, bw);
        for i in 0..n {
            for j in i.saturating_sub(bw)..(i + bw + 1).min(n) {
                m.add(i, j, rng.random_range(-1.0..1.0));
            }
            if dominant {
                m.add(i, i, 4.0 * bw as f64);
            }
        }
        m
    }

    #[test]
    fn matches_dense_lu() {
        let m = random_band(40, 5, 1, true);
        let b = DVector::from_fn(40, |i, _| (i as f64).cos());
        let dense = m.to_dense();
        let x = m.solve(&b).unwrap();
        assert!((&dense * &x - &b).norm() < 1e-12);
    }

    #[test]
    fn zero_pivot_falls_back_to_pivoting() {
        // [[0, 1], [1, 0]] needs a row swap
        let mut m = BandMatrix::zeros(2, 1);
        m.add(0, 1, 1.0);
        m.add(1, 0, 1.0);
        let x = m.solve(&DVector::from_vec(vec![2.0, 3.0])).unwrap();
        assert_eq!(x.as_slice(), &[3.0, 2.0]);
    }

    #[test]
    fn non_dominant_random_band() {
        let m = random_band(30, 3, 9, false);
        let dense = m.to_dense();
        let b = DVector::from_element(30, 1.0);
        let x = m.solve(&b).unwrap();
        assert!((&dense * &x - &b).norm() < 1e-8 * x.norm().max(1.0));
    }
}
