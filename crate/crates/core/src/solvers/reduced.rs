//! The reduced Newton system in the primal increments, solved either by a
//! banded direct factorisation (default up to 128x128 images) or by
//! Jacobi-preconditioned CG (larger images).

use super::banded::BandedSpd;
use super::pcg::pcg;
use super::tv_lin::TvLinearisation;
use super::{LinMethod, LinSolveConfig};

/// Image sizes up to this pixel count take the direct path under
/// [`LinMethod::Auto`].
const DIRECT_PIXEL_LIMIT: usize = 128 * 128;

pub(crate) struct Reduced<'a> {
    pub tv: &'a TvLinearisation,
    pub n: usize,
    pub width: usize,
    /// Fidelity diagonal on the `u` block.
    pub fid_uu: &'a [f64],
    /// Coupling and `v`-block diagonal for two-variable systems.
    pub fid_uv: Option<&'a [f64]>,
    pub fid_vv: Option<&'a [f64]>,
}

pub(crate) struct LinFailure {
    pub iterations: usize,
    pub relative_residual: f64,
}

impl Reduced<'_> {
    fn vars(&self) -> usize {
        if self.fid_vv.is_some() {
            2
        } else {
            1
        }
    }

    /// Solves `H delta = b` with `b` in block layout (`[b_u; b_v]`).
    pub fn solve(&self, b: &[f64], cfg: &LinSolveConfig) -> Result<Vec<f64>, LinFailure> {
        let direct = match cfg.method {
            LinMethod::Direct => true,
            LinMethod::Pcg => false,
            LinMethod::Auto => self.n <= DIRECT_PIXEL_LIMIT,
        };
        if direct {
            Ok(self.solve_direct(b))
        } else {
            self.solve_pcg(b, cfg)
        }
    }

    fn solve_direct(&self, b: &[f64]) -> Vec<f64> {
        let vars = self.vars();
        let n = self.n;
        let mut band = BandedSpd::new(vars * n, vars * self.width);
        self.tv.assemble(&mut band, vars);
        for i in 0..n {
            band.add(vars * i, vars * i, self.fid_uu[i]);
        }
        if let (Some(uv), Some(vv)) = (self.fid_uv, self.fid_vv) {
            for i in 0..n {
                band.add(2 * i + 1, 2 * i + 1, vv[i]);
                band.add(2 * i + 1, 2 * i, uv[i]);
            }
        }
        band.factor();
        // Permute block -> interleaved, solve, permute back.
        let mut x = vec![0.0; vars * n];
        if vars == 2 {
            for i in 0..n {
                x[2 * i] = b[i];
                x[2 * i + 1] = b[n + i];
            }
        } else {
            x.copy_from_slice(b);
        }
        band.solve(&mut x);
        if vars == 2 {
            let mut out = vec![0.0; 2 * n];
            for i in 0..n {
                out[i] = x[2 * i];
                out[n + i] = x[2 * i + 1];
            }
            out
        } else {
            x
        }
    }

    fn solve_pcg(&self, b: &[f64], cfg: &LinSolveConfig) -> Result<Vec<f64>, LinFailure> {
        let n = self.n;
        let vars = self.vars();
        let mut diag = vec![0.0; vars * n];
        self.tv.add_diag(&mut diag[..n]);
        for i in 0..n {
            diag[i] += self.fid_uu[i];
        }
        if let Some(vv) = self.fid_vv {
            diag[n..].copy_from_slice(vv);
        }
        let apply = |x: &[f64], y: &mut [f64]| {
            y.fill(0.0);
            self.tv.apply(&x[..n], &mut y[..n]);
            for i in 0..n {
                y[i] += self.fid_uu[i] * x[i];
            }
            if let (Some(uv), Some(vv)) = (self.fid_uv, self.fid_vv) {
                for i in 0..n {
                    y[i] += uv[i] * x[n + i];
                    y[n + i] = uv[i] * x[i] + vv[i] * x[n + i];
                }
            }
        };
        let mut x = vec![0.0; vars * n];
        let out = pcg(apply, &diag, b, &mut x, cfg.tol_rel, cfg.max_iter);
        if out.converged {
            Ok(x)
        } else {
            Err(LinFailure {
                iterations: out.iterations,
                relative_residual: out.relative_residual,
            })
        }
    }
}
