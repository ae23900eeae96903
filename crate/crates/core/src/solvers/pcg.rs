//! Matrix-free preconditioned conjugate gradients for the reduced Newton
//! systems.

/// Outcome of a CG solve.
#[derive(Debug, Clone, Copy)]
#[allow(dead_code)]
pub(crate) struct PcgOutcome {
    pub iterations: usize,
    pub relative_residual: f64,
    pub converged: bool,
}

/// Solves `H x = b` for symmetric positive definite `H` given as a
/// matrix-vector product, with Jacobi preconditioning. `x` carries the
/// initial guess and is overwritten with the solution.
pub(crate) fn pcg(
    apply: impl Fn(&[f64], &mut [f64]),
    diag: &[f64],
    b: &[f64],
    x: &mut [f64],
    tol_rel: f64,
    max_iter: usize,
) -> PcgOutcome {
    let n = b.len();
    let b_norm = super::l2_norm(b);
    if b_norm == 0.0 {
        x.fill(0.0);
        return PcgOutcome {
            iterations: 0,
            relative_residual: 0.0,
            converged: true,
        };
    }

    let inv_diag: Vec<f64> = diag.iter().map(|&d| 1.0 / d.max(1e-300)).collect();

    let mut r = vec![0.0; n];
    apply(x, &mut r);
    for i in 0..n {
        r[i] = b[i] - r[i];
    }
    let mut z: Vec<f64> = r.iter().zip(&inv_diag).map(|(ri, di)| ri * di).collect();
    let mut p = z.clone();
    let mut rz: f64 = r.iter().zip(&z).map(|(a, b)| a * b).sum();
    let mut hp = vec![0.0; n];

    let mut res_norm = super::l2_norm(&r);
    let mut best = res_norm;
    for iter in 1..=max_iter {
        if res_norm <= tol_rel * b_norm {
            return PcgOutcome {
                iterations: iter - 1,
                relative_residual: res_norm / b_norm,
                converged: true,
            };
        }
        apply(&p, &mut hp);
        let php: f64 = p.iter().zip(&hp).map(|(a, b)| a * b).sum();
        if !(php > 0.0) || !php.is_finite() {
            // Curvature breakdown: report what was achieved.
            return PcgOutcome {
                iterations: iter,
                relative_residual: res_norm / b_norm,
                converged: res_norm <= tol_rel * b_norm,
            };
        }
        let alpha = rz / php;
        for i in 0..n {
            x[i] += alpha * p[i];
            r[i] -= alpha * hp[i];
        }
        for i in 0..n {
            z[i] = r[i] * inv_diag[i];
        }
        let rz_new: f64 = r.iter().zip(&z).map(|(a, b)| a * b).sum();
        let beta = rz_new / rz;
        rz = rz_new;
        for i in 0..n {
            p[i] = z[i] + beta * p[i];
        }
        res_norm = super::l2_norm(&r);
        if res_norm < best {
            best = res_norm;
        }
        // Periodic explicit residual refresh against drift.
        if iter % 256 == 0 {
            apply(x, &mut hp);
            for i in 0..n {
                r[i] = b[i] - hp[i];
            }
            res_norm = super::l2_norm(&r);
            for i in 0..n {
                z[i] = r[i] * inv_diag[i];
            }
            rz = r.iter().zip(&z).map(|(a, b)| a * b).sum();
            p.copy_from_slice(&z);
        }
    }
    PcgOutcome {
        iterations: max_iter,
        relative_residual: res_norm / b_norm,
        converged: res_norm <= tol_rel * b_norm,
    }
}

#[cfg(test)]
mod tests {
    use super::*;
    use rand::{Rng, SeedableRng};
    use rand_chacha::ChaCha12Rng;

    #[test]
    fn solves_dense_spd_system() {
        let n = 40;
        let mut rng = ChaCha12Rng::seed_from_u64(1);
        // H = A^T A + I is SPD.
        let a: Vec<f64> = (0..n * n).map(|_| rng.gen_range(-1.0..1.0)).collect();
        let mut h = vec![0.0; n * n];
        for i in 0..n {
            for j in 0..n {
                let mut s = 0.0;
                for k in 0..n {
                    s += a[k * n + i] * a[k * n + j];
                }
                h[i * n + j] = s + if i == j { 1.0 } else { 0.0 };
            }
        }
        let x_true: Vec<f64> = (0..n).map(|_| rng.gen_range(-1.0..1.0)).collect();
        let mut b = vec![0.0; n];
        for i in 0..n {
            b[i] = (0..n).map(|j| h[i * n + j] * x_true[j]).sum();
        }
        let diag: Vec<f64> = (0..n).map(|i| h[i * n + i]).collect();
        let apply = |x: &[f64], y: &mut [f64]| {
            for i in 0..n {
                y[i] = (0..n).map(|j| h[i * n + j] * x[j]).sum();
            }
        };
        let mut x = vec![0.0; n];
        let out = pcg(apply, &diag, &b, &mut x, 1e-12, 1000);
        assert!(out.converged);
        for i in 0..n {
            assert!((x[i] - x_true[i]).abs() < 1e-8);
        }
    }

    #[test]
    fn zero_rhs_returns_zero() {
        let diag = vec![1.0; 5];
        let b = vec![0.0; 5];
        let mut x = vec![3.0; 5];
        let out = pcg(|p, y| y.copy_from_slice(p), &diag, &b, &mut x, 1e-10, 10);
        assert!(out.converged);
        assert!(x.iter().all(|&v| v == 0.0));
    }
}
