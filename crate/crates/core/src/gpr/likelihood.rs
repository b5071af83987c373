//! Covariance assembly, jittered Cholesky factorization and the log marginal likelihood.

use nalgebra::{Cholesky, DMatrix, DVector, Dyn};

use super::kernel::Kernel;
use crate::error::{Error, Result};

/// Relative jitter added to the diagonal before the first factorization attempt.
pub const JITTER_START: f64 = 1e-10;
/// Largest relative jitter tried before giving up.
pub const JITTER_MAX: f64 = 1e-6;

/// Noise-free covariance of the columns of `x` (d × n).
pub fn covariance(kernel: &Kernel, x: &DMatrix<f64>) -> DMatrix<f64> {
    let n = x.ncols();
    let mut k = DMatrix::zeros(n, n);
    for j in 0..n {
        let xj = x.column(j);
        for i in j..n {
            let v = kernel.eval_unchecked(x.column(i).as_slice(), xj.as_slice());
            k[(i, j)] = v;
            k[(j, i)] = v;
        }
    }
    k
}

/// Cholesky factor of `K + (σ_y² + jitter) I`, escalating the jitter tenfold
/// from `1e-10·mean(diag K)` up to `1e-6·mean(diag K)`. Returns the factor and
/// the absolute jitter used.
pub fn factorize(k: &DMatrix<f64>, noise_var: f64) -> Result<(Cholesky<f64, Dyn>, f64)> {
    let n = k.nrows();
    let mean_diag = (k.trace() / n as f64).abs().max(f64::MIN_POSITIVE);
    let mut rel = JITTER_START;
    loop {
        let jitter = rel * mean_diag;
        let mut a = k.clone();
        for i in 0..n {
            a[(i, i)] += noise_var + jitter;
        }
        if let Some(chol) = Cholesky::new(a) {
            return Ok((chol, jitter));
        }
        if rel >= JITTER_MAX * (1.0 - 1e-12) {
            return Err(Error::IllConditionedKernel { jitter });
        }
        rel *= 10.0;
    }
}

/// Log marginal likelihood of `y` under a zero-mean GP after subtracting `mean`,
/// and its gradient with respect to `[kernel log-params…, log σ_y]`.
pub fn log_marginal_likelihood(
    kernel: &Kernel,
    noise_std: f64,
    x: &DMatrix<f64>,
    y: &[f64],
    mean: f64,
) -> Result<(f64, Vec<f64>)> {
    let n = x.ncols();
    if n == 0 || y.len() != n {
        return Err(Error::DimensionMismatch { expected: n, found: y.len() });
    }
    if x.nrows() != kernel.dim {
        return Err(Error::DimensionMismatch { expected: kernel.dim, found: x.nrows() });
    }
    let k = covariance(kernel, x);
    let noise_var = noise_std * noise_std;
    let (chol, jitter) = factorize(&k, noise_var)?;
    let r = DVector::from_iterator(n, y.iter().map(|v| v - mean));
    let alpha = chol.solve(&r);
    let log_det: f64 = chol.l_dirty().diagonal().iter().map(|d| d.ln()).sum::<f64>() * 2.0;
    let value = -0.5 * r.dot(&alpha) - 0.5 * log_det - 0.5 * n as f64 * (2.0 * std::f64::consts::PI).ln();

    // ∂/∂θ = ½ tr((ααᵀ - K⁻¹) ∂K/∂θ)
    let mut w = chol.inverse();
    w.iter_mut().for_each(|v| *v = -*v);
    w.ger(1.0, &alpha, &alpha, 1.0);
    let n_kernel = kernel.log_params().len();
    let mut grad = vec![0.0; n_kernel + 1];
    let mut dk = vec![0.0; n_kernel];
    let mut d_diag = vec![0.0; n_kernel];
    for j in 0..n {
        let xj = x.column(j);
        for i in j..n {
            kernel.eval_with_grad(x.column(i).as_slice(), xj.as_slice(), &mut dk);
            let weight = if i == j { 0.5 * w[(i, j)] } else { w[(i, j)] };
            for (g, d) in grad.iter_mut().zip(&dk) {
                *g += weight * d;
            }
            if i == j {
                for (a, d) in d_diag.iter_mut().zip(&dk) {
                    *a += d;
                }
            }
        }
    }
    let w_trace = w.trace();
    grad[n_kernel] = noise_var * w_trace;
    // The jitter is a fixed fraction of mean(diag K) and moves with the hyperparameters.
    let rel_jitter = jitter / (k.trace() / n as f64).abs().max(f64::MIN_POSITIVE);
    for (g, d) in grad.iter_mut().zip(&d_diag).skip(1) {
        *g += 0.5 * w_trace * rel_jitter * d / n as f64;
    }
    // Every kernel is proportional to σ_f², so together with the jitter
    // ∂K/∂log σ_f = 2(K - σ_y² I); K⁻¹K = I then avoids the cancellation in W
    // when K is nearly singular.
    let inv_trace = alpha.norm_squared() - w_trace;
    grad[0] = (r.dot(&alpha) - noise_var * alpha.norm_squared()) - (n as f64 - noise_var * inv_trace);
    Ok((value, grad))
}

#[cfg(test)]
mod tests {
    use super::*;
    use rand::{Rng, SeedableRng};
    use rand_chacha::ChaCha8Rng;

    #[test]
    fn single_point_value() {
        let x = DMatrix::from_row_slice(1, 1, &[0.0]);
        let (v, _) = log_marginal_likelihood(&Kernel::rbf(1.0, 1.0, 1), 0.0, &x, &[0.0], 0.0).unwrap();
        assert!((v + 0.5 * (2.0 * std::f64::consts::PI).ln()).abs() < 1e-9);
        assert!((v + 0.91894).abs() < 1e-5);
    }

    #[test]
    fn huge_noise_drives_likelihood_down() {
        let x = DMatrix::from_row_slice(1, 3, &[0.0, 0.5, 1.0]);
        let y = [0.1, -0.2, 0.3];
        let k = Kernel::rbf(1.0, 0.5, 1);
        let mut last = f64::INFINITY;
        for s in [1e1, 1e3, 1e5, 1e7] {
            let (v, _) = log_marginal_likelihood(&k, s, &x, &y, 0.0).unwrap();
            assert!(v < last);
            last = v;
        }
        assert!(last < -40.0);
    }

    #[test]
    fn jitter_rescues_duplicate_points() {
        let x = DMatrix::from_row_slice(1, 2, &[0.3, 0.3]);
        let k = covariance(&Kernel::rbf(1.0, 1.0, 1), &x);
        let (_, jitter) = factorize(&k, 0.0).unwrap();
        assert!(jitter > 0.0 && jitter <= 1e-6);
        let bad = DMatrix::from_row_slice(2, 2, &[1.0, 2.0, 2.0, 1.0]);
        assert!(matches!(factorize(&bad, 0.0), Err(Error::IllConditionedKernel { .. })));
    }

    fn fd_check(kernel: &Kernel, noise: f64, x: &DMatrix<f64>, y: &[f64]) -> f64 {
        let mut theta = kernel.log_params();
        theta.push(noise.ln());
        let eval = |t: &[f64]| {
            let k = Kernel::from_log_params(kernel.kind, kernel.dim, &t[..t.len() - 1]);
            log_marginal_likelihood(&k, t[t.len() - 1].exp(), x, y, 0.1).unwrap()
        };
        let (_, grad) = eval(&theta);
        let scale = grad.iter().fold(0.0f64, |m, g| m.max(g.abs())).max(1e-8);
        let mut worst: f64 = 0.0;
        for j in 0..theta.len() {
            let h = 1e-5;
            let mut tp = theta.clone();
            tp[j] += h;
            let mut tm = theta.clone();
            tm[j] -= h;
            let fd = (eval(&tp).0 - eval(&tm).0) / (2.0 * h);
            worst = worst.max((fd - grad[j]).abs() / scale);
        }
        worst
    }

    /// Gradient against central differences on 20 random 10-point problems.
    #[test]
    fn gradient_matches_finite_differences() {
        let mut rng = ChaCha8Rng::seed_from_u64(11);
        for case in 0..20 {
            let d = 1 + case % 3;
            let x = DMatrix::from_fn(d, 10, |_, _| rng.random::<f64>());
            let y: Vec<f64> = (0..10).map(|_| rng.random::<f64>() - 0.5).collect();
            let kernel = match case % 3 {
                0 => Kernel::rbf(rng.random_range(0.5..2.0), rng.random_range(0.2..1.5), d),
                1 => Kernel::ard(rng.random_range(0.5..2.0), (0..d).map(|_| rng.random_range(0.2..1.5)).collect()),
                _ => Kernel::polynomial(rng.random_range(0.5..2.0), rng.random_range(0.2..1.5), 2, d),
            };
            let noise = rng.random_range(0.05..0.5);
            let err = fd_check(&kernel, noise, &x, &y);
            assert!(err < 1e-5, "case {case}: relative gradient error {err}");
        }
    }
}
