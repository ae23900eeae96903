//! Semismooth Newton solvers for the Poisson + Gaussian family: the
//! two-variable infimal-convolution model with KL fidelity and the TV-KL /
//! TV-L2-KL baselines.
//!
//! The unilateral constraints `u >= 0` and `v <= f` are relaxed by quadratic
//! penalties on the characteristic sets `I_u = {u < 0}` and `I_v = {v > f}`;
//! the penalty weights start at `penalty_init` and grow by `penalty_growth`
//! every `penalty_every` iterations (and whenever the iterate stalls while a
//! penalty set is still populated), capped at `penalty_cap`.
//!
//! Inside the solver the KL integrand is extended below `KL_FLOOR` by its
//! first-order Taylor expansion (bilinear in `(f-v, u)`), which keeps the
//! barrier forces bounded, leaves a stationary point for every pixel (the
//! penalties balance the frozen slopes), and makes the line-search energy an
//! exact antiderivative of the residual.

use crate::error::{Error, Result};
use crate::grid::{div_backward, DualField, ImageGrid};
use crate::huber::huber_tv;

use super::reduced::Reduced;
use super::tv_lin::{formula_dual, project_dual, TvLinearisation};
use super::{
    check_finite, l2_norm, IterationRecord, SolveFlags, SolveResult, SolverConfig, Termination,
};

/// Initial lower bound for `u0 = max(f, ...)`. Starting at the barrier floor
/// would freeze dark pixels.
const INIT_FLOOR: f64 = 1e-2;

/// Smoothing scale of the positivity floor inside the solver's KL terms.
/// Well under the intensity scale but large enough to keep the per-pixel
/// blocks of the Newton system conditioned.
const KL_FLOOR: f64 = 1e-4;

/// Smooth positive clamp `s(x) = (x + sqrt(x^2 + 4 d^2))/2`: close to `x`
/// above the floor scale `d`, decaying to zero below it, always positive.
#[inline]
fn smax(x: f64) -> f64 {
    0.5 * (x + (x * x + 4.0 * KL_FLOOR * KL_FLOOR).sqrt())
}

#[inline]
fn smax_d(x: f64) -> f64 {
    0.5 * (1.0 + x / (x * x + 4.0 * KL_FLOOR * KL_FLOOR).sqrt())
}

/// The solver's KL integrand: `a(s(phi), s(u))` with
/// `a(x,y) = x log(x/y) - x + y`. Smooth in both arguments, so the forces
/// below are its exact gradient and stay bounded for negative iterates.
#[inline]
fn kl_ext_value(phi: f64, u: f64) -> f64 {
    let (sp, su) = (smax(phi), smax(u));
    sp * (sp / su).ln() - sp + su
}

/// `d/du` of [`kl_ext_value`].
#[inline]
fn kl_ext_du(phi: f64, u: f64) -> f64 {
    (1.0 - smax(phi) / smax(u)) * smax_d(u)
}

/// `d/dphi` of [`kl_ext_value`].
#[inline]
fn kl_ext_dphi(phi: f64, u: f64) -> f64 {
    (smax(phi) / smax(u)).ln() * smax_d(phi)
}

/// Joint solve of the Huberised TV-IC model with L2 + KL fidelity:
/// `min_{u,v} |Du|_gamma + (lambda1/2)||v||^2 + lambda2 D_KL(f-v, u)`
/// plus the positivity penalties.
pub fn ssn_l2kl(f: &ImageGrid, cfg: &SolverConfig) -> Result<SolveResult> {
    cfg.validate()?;
    let (lambda1, lambda2) = (cfg.weights.lambda1, cfg.weights.lambda2);
    if !(lambda1 > 0.0) || !(lambda2 > 0.0) {
        return Err(Error::InvalidParam(
            "ssn_l2kl requires positive lambda1, lambda2".into(),
        ));
    }
    let gamma = cfg.gamma;
    let n = f.len();

    // The KL curvature is too rough for full steps near the positivity
    // boundary; the Armijo safeguard stays on for this solver.
    let mut cfg_kl = cfg.clone();
    cfg_kl.damping = true;
    let cfg = &cfg_kl;

    let mut u = f.map(|x| x.max(INIT_FLOOR));
    let mut v = ImageGrid::zeros(f.width(), f.height())?;
    let mut q = formula_dual(&u, gamma);
    let (mut pen_u, mut pen_v) = cfg.penalty_init;

    let mut history = Vec::new();
    let mut termination = Termination::MaxIter;
    let mut converged = false;
    let resid_target = 1e-6 * (1.0 + l2_norm(f.data()));

    for iter in 1..=cfg.max_iter {
        let tv = TvLinearisation::new(&u, &q, gamma);
        let in_u: Vec<bool> = u.data().iter().map(|&x| x < 0.0).collect();
        let in_v: Vec<bool> = (0..n).map(|i| v.data()[i] > f.data()[i]).collect();

        let mut b = vec![0.0; 2 * n];
        {
            let (bu, bv) = b.split_at_mut(n);
            tv.add_grad_energy(bu);
            for i in 0..n {
                let phi = f.data()[i] - v.data()[i];
                let ui = u.data()[i];
                let mut ru = bu[i] + lambda2 * kl_ext_du(phi, ui);
                if in_u[i] {
                    ru += pen_u * ui;
                }
                bu[i] = -ru;
                let mut rv = lambda1 * v.data()[i] - lambda2 * kl_ext_dphi(phi, ui);
                if in_v[i] {
                    rv += pen_v * (v.data()[i] - f.data()[i]);
                }
                bv[i] = -rv;
            }
        }
        check_finite(&b, "ssn_l2kl rhs")?;

        // Quasi-Newton curvature `lambda2 max(s_phi, s_u)/s_u^2` for the
        // barrier term: exact where `phi ~ u` (the solution regime) and
        // bounded when an iterate overshoots above the barrier attractor,
        // where the true second derivative collapses.
        let su: Vec<f64> = u.data().iter().map(|&x| smax(x)).collect();
        let sdu: Vec<f64> = u.data().iter().map(|&x| smax_d(x)).collect();
        let sphi: Vec<f64> = (0..n).map(|i| smax(f.data()[i] - v.data()[i])).collect();
        let sdphi: Vec<f64> = (0..n).map(|i| smax_d(f.data()[i] - v.data()[i])).collect();
        let du_diag: Vec<f64> = (0..n)
            .map(|i| {
                lambda2 * sphi[i].max(su[i]) / (su[i] * su[i]) * sdu[i] * sdu[i]
                    + if in_u[i] { pen_u } else { 0.0 }
            })
            .collect();
        let coupling: Vec<f64> = (0..n)
            .map(|i| lambda2 * sdphi[i] * sdu[i] / su[i])
            .collect();
        let dv_diag: Vec<f64> = (0..n)
            .map(|i| {
                lambda1
                    + lambda2 * sdphi[i] * sdphi[i] / sphi[i]
                    + if in_v[i] { pen_v } else { 0.0 }
            })
            .collect();

        let sys = Reduced {
            tv: &tv,
            n,
            width: f.width(),
            fid_uu: &du_diag,
            fid_uv: Some(&coupling),
            fid_vv: Some(&dv_diag),
        };
        let delta = match sys.solve(&b, &cfg.linsolve) {
            Ok(d) => d,
            Err(_) => {
                termination = Termination::LinSolveFailure;
                break;
            }
        };
        check_finite(&delta, "ssn_l2kl newton step")?;

        let (du, dv) = delta.split_at(n);
        let dq = tv.dual_step(du, &q);

        let step = super::l1l2::choose_step(cfg, &b, &delta, |s| {
            let (ut2, vt, qt) = trial(&u, &v, &q, du, dv, &dq, s);
            let energy = penalised_energy(f, &ut2, &vt, lambda1, lambda2, gamma, pen_u, pen_v);
            let resid = residual_l2kl(f, &ut2, &vt, &qt, lambda1, lambda2, gamma, pen_u, pen_v);
            (energy, resid)
        });

        let (ut2, vt, qt) = trial(&u, &v, &q, du, dv, &dq, step);
        u = ut2;
        v = vt;
        q = qt;
        check_finite(u.data(), "ssn_l2kl iterate")?;

        let step_norm = step * l2_norm(&delta);
        let iterate_norm = (l2_norm(u.data()).powi(2) + l2_norm(v.data()).powi(2)).sqrt();
        let active_u = u.data().iter().filter(|&&x| x < 0.0).count();
        let active_v = (0..n).filter(|&i| v.data()[i] > f.data()[i]).count();
        let residual_norm =
            residual_l2kl(f, &u, &v, &q, lambda1, lambda2, gamma, pen_u, pen_v);
        history.push(IterationRecord {
            energy: penalised_energy(f, &u, &v, lambda1, lambda2, gamma, pen_u, pen_v),
            step_norm,
            residual_norm,
            active_a: active_u,
            active_b: active_v,
        });

        if step == 1.0
            && step_norm <= cfg.tol * iterate_norm.max(1e-30)
            && residual_norm <= resid_target
        {
            let sets_empty = active_u == 0 && active_v == 0;
            let capped = pen_u >= cfg.penalty_cap && pen_v >= cfg.penalty_cap;
            if sets_empty || capped {
                converged = true;
                termination = Termination::Tolerance;
                break;
            }
            // Stalled with populated penalty sets: tighten and continue.
            pen_u = (pen_u * cfg.penalty_growth).min(cfg.penalty_cap);
            pen_v = (pen_v * cfg.penalty_growth).min(cfg.penalty_cap);
        } else if iter % cfg.penalty_every == 0 {
            pen_u = (pen_u * cfg.penalty_growth).min(cfg.penalty_cap);
            pen_v = (pen_v * cfg.penalty_growth).min(cfg.penalty_cap);
        }
    }

    let degenerate = (0..n).any(|i| f.data()[i] <= 0.0 && v.data()[i] > f.data()[i]);
    Ok(SolveResult {
        u,
        v,
        q,
        p: None,
        iterations: history.len(),
        history,
        converged,
        termination,
        flags: SolveFlags {
            degenerate_pixels: degenerate,
            ..SolveFlags::default()
        },
    })
}

fn trial(
    u: &ImageGrid,
    v: &ImageGrid,
    q: &DualField,
    du: &[f64],
    dv: &[f64],
    dq: &DualField,
    s: f64,
) -> (ImageGrid, ImageGrid, DualField) {
    let mut ut = u.clone();
    let mut vt = v.clone();
    for i in 0..du.len() {
        ut.data_mut()[i] += s * du[i];
        vt.data_mut()[i] += s * dv[i];
    }
    let mut qt = q.clone();
    for (x, d) in qt.data_mut().iter_mut().zip(dq.data()) {
        *x += s * d;
    }
    project_dual(&mut qt);
    (ut, vt, qt)
}

/// The solver's internal objective; its gradient is exactly the nonlinear
/// residual below, which keeps the Armijo line search meaningful.
#[allow(clippy::too_many_arguments)]
fn penalised_energy(
    f: &ImageGrid,
    u: &ImageGrid,
    v: &ImageGrid,
    lambda1: f64,
    lambda2: f64,
    gamma: f64,
    pen_u: f64,
    pen_v: f64,
) -> f64 {
    let mut acc = huber_tv(u, gamma);
    for i in 0..f.len() {
        let vi = v.data()[i];
        let phi = f.data()[i] - vi;
        acc += 0.5 * lambda1 * vi * vi + lambda2 * kl_ext_value(phi, u.data()[i]);
        let un = u.data()[i].min(0.0);
        let pn = phi.min(0.0);
        acc += 0.5 * pen_u * un * un + 0.5 * pen_v * pn * pn;
    }
    acc
}

/// Stacked l2 norm of the penalised primal-dual optimality residual.
#[allow(clippy::too_many_arguments)]
fn residual_l2kl(
    f: &ImageGrid,
    u: &ImageGrid,
    v: &ImageGrid,
    q: &DualField,
    lambda1: f64,
    lambda2: f64,
    gamma: f64,
    pen_u: f64,
    pen_v: f64,
) -> f64 {
    let n = f.len();
    let div_q = div_backward(q).expect("q is 2-channel");
    let q_formula = formula_dual(u, gamma);
    let mut acc = 0.0;
    for i in 0..n {
        let phi = f.data()[i] - v.data()[i];
        let ui = u.data()[i];
        let mut fu = -div_q.data()[i] + lambda2 * kl_ext_du(phi, ui);
        if ui < 0.0 {
            fu += pen_u * ui;
        }
        let mut fv = lambda1 * v.data()[i] - lambda2 * kl_ext_dphi(phi, ui);
        if v.data()[i] > f.data()[i] {
            fv += pen_v * (v.data()[i] - f.data()[i]);
        }
        acc += fu * fu + fv * fv;
    }
    for (a, b) in q.data().iter().zip(q_formula.data()) {
        let d = a - b;
        acc += d * d;
    }
    acc.sqrt()
}

/// TV-KL baseline `min_u |Du|_gamma + lambda2 sum(u - f log u)` with the
/// positivity penalty on `u`. Negative data is clamped (flagged).
pub fn tv_kl(f: &ImageGrid, lambda2: f64, gamma: f64, cfg: &SolverConfig) -> Result<SolveResult> {
    solve_single_kl(f, None, lambda2, gamma, cfg)
}

/// TV-L2-KL baseline
/// `min_u |Du|_gamma + (lambda1/2)||f-u||^2 + lambda2 sum(u - f log u)`.
pub fn tv_l2kl(
    f: &ImageGrid,
    lambda1: f64,
    lambda2: f64,
    gamma: f64,
    cfg: &SolverConfig,
) -> Result<SolveResult> {
    if !(lambda1 > 0.0) {
        return Err(Error::InvalidParam("lambda1 must be positive".into()));
    }
    solve_single_kl(f, Some(lambda1), lambda2, gamma, cfg)
}

fn solve_single_kl(
    f: &ImageGrid,
    l1: Option<f64>,
    lambda2: f64,
    gamma: f64,
    cfg: &SolverConfig,
) -> Result<SolveResult> {
    cfg.validate()?;
    if !(lambda2 > 0.0) {
        return Err(Error::InvalidParam("lambda2 must be positive".into()));
    }
    let n = f.len();
    let clamped_input = f.data().iter().any(|&x| x < 0.0);
    let fc = f.map(|x| x.max(0.0));

    let mut cfg_kl = cfg.clone();
    cfg_kl.damping = true;
    let cfg = &cfg_kl;

    let mut u = f.map(|x| x.max(INIT_FLOOR));
    let mut q = formula_dual(&u, gamma);
    let mut pen_u = cfg.penalty_init.0;
    let resid_target = 1e-6 * (1.0 + l2_norm(f.data()));

    // Reduced fidelity `s(u) - fc log s(u)` with the smooth positive clamp.
    let fid_value = |ui: f64, fci: f64| -> f64 {
        let s = smax(ui);
        s - fci * s.ln()
    };
    let fid_grad = |ui: f64, fci: f64| -> f64 { (1.0 - fci / smax(ui)) * smax_d(ui) };

    let energy = |u: &ImageGrid, pen_u: f64| -> f64 {
        let mut acc = huber_tv(u, gamma);
        for i in 0..n {
            let ui = u.data()[i];
            acc += lambda2 * fid_value(ui, fc.data()[i]);
            if let Some(lambda1) = l1 {
                let w = ui - f.data()[i];
                acc += 0.5 * lambda1 * w * w;
            }
            let un = ui.min(0.0);
            acc += 0.5 * pen_u * un * un;
        }
        acc
    };

    let residual = |u: &ImageGrid, q: &DualField, pen_u: f64| -> f64 {
        let div_q = div_backward(q).expect("q is 2-channel");
        let q_formula = formula_dual(u, gamma);
        let mut acc = 0.0;
        for i in 0..n {
            let ui = u.data()[i];
            let mut fu = -div_q.data()[i] + lambda2 * fid_grad(ui, fc.data()[i]);
            if let Some(lambda1) = l1 {
                fu += lambda1 * (ui - f.data()[i]);
            }
            if ui < 0.0 {
                fu += pen_u * ui;
            }
            acc += fu * fu;
        }
        for (a, b) in q.data().iter().zip(q_formula.data()) {
            let d = a - b;
            acc += d * d;
        }
        acc.sqrt()
    };

    let mut history = Vec::new();
    let mut termination = Termination::MaxIter;
    let mut converged = false;

    for iter in 1..=cfg.max_iter {
        let tv = TvLinearisation::new(&u, &q, gamma);
        let in_u: Vec<bool> = u.data().iter().map(|&x| x < 0.0).collect();

        let mut b = vec![0.0; n];
        tv.add_grad_energy(&mut b);
        let mut fid_diag = vec![0.0; n];
        for i in 0..n {
            let ui = u.data()[i];
            let s = smax(ui);
            let sd = smax_d(ui);
            let mut ru = b[i] + lambda2 * fid_grad(ui, fc.data()[i]);
            let mut d = lambda2 * fc.data()[i].max(s) / (s * s) * sd * sd;
            if let Some(lambda1) = l1 {
                ru += lambda1 * (ui - f.data()[i]);
                d += lambda1;
            }
            if in_u[i] {
                ru += pen_u * ui;
                d += pen_u;
            }
            b[i] = -ru;
            fid_diag[i] = d;
        }
        check_finite(&b, "tv_kl rhs")?;

        let sys = Reduced {
            tv: &tv,
            n,
            width: f.width(),
            fid_uu: &fid_diag,
            fid_uv: None,
            fid_vv: None,
        };
        let delta = match sys.solve(&b, &cfg.linsolve) {
            Ok(d) => d,
            Err(_) => {
                termination = Termination::LinSolveFailure;
                break;
            }
        };
        check_finite(&delta, "tv_kl newton step")?;

        let dq = tv.dual_step(&delta, &q);
        let step = super::l1l2::choose_step(cfg, &b, &delta, |s| {
            let (ut2, qt) = trial_single(&u, &q, &delta, &dq, s);
            (energy(&ut2, pen_u), residual(&ut2, &qt, pen_u))
        });

        let (ut2, qt) = trial_single(&u, &q, &delta, &dq, step);
        u = ut2;
        q = qt;
        check_finite(u.data(), "tv_kl iterate")?;

        let step_norm = step * l2_norm(&delta);
        let active_u = u.data().iter().filter(|&&x| x < 0.0).count();
        let residual_norm = residual(&u, &q, pen_u);
        history.push(IterationRecord {
            energy: energy(&u, pen_u),
            step_norm,
            residual_norm,
            active_a: active_u,
            active_b: 0,
        });

        if step == 1.0
            && step_norm <= cfg.tol * l2_norm(u.data()).max(1e-30)
            && residual_norm <= resid_target
        {
            if active_u == 0 || pen_u >= cfg.penalty_cap {
                converged = true;
                termination = Termination::Tolerance;
                break;
            }
            pen_u = (pen_u * cfg.penalty_growth).min(cfg.penalty_cap);
        } else if iter % cfg.penalty_every == 0 {
            pen_u = (pen_u * cfg.penalty_growth).min(cfg.penalty_cap);
        }
    }

    let v = ImageGrid::zeros(f.width(), f.height())?;
    Ok(SolveResult {
        u,
        v,
        q,
        p: None,
        iterations: history.len(),
        history,
        converged,
        termination,
        flags: SolveFlags {
            clamped_input,
            ..SolveFlags::default()
        },
    })
}

fn trial_single(
    u: &ImageGrid,
    q: &DualField,
    du: &[f64],
    dq: &DualField,
    s: f64,
) -> (ImageGrid, DualField) {
    let mut ut = u.clone();
    for i in 0..du.len() {
        ut.data_mut()[i] += s * du[i];
    }
    let mut qt = q.clone();
    for (x, d) in qt.data_mut().iter_mut().zip(dq.data()) {
        *x += s * d;
    }
    project_dual(&mut qt);
    (ut, qt)
}

#[cfg(test)]
mod tests {
    use super::*;

    /// The extended KL integrand must stay consistent with its stated partial
    /// derivatives across both floors (finite-difference check).
    #[test]
    fn extended_kl_gradient_consistency() {
        let h = 1e-7;
        let points = [
            (0.5, 0.3),
            (2e-5, 0.4),
            (0.4, 2e-5),
            (-0.2, 0.5),
            (0.5, -0.2),
            (-0.1, -0.1),
            (3e-5, 5e-5),
        ];
        for (phi, u) in points {
            let du_fd = (kl_ext_value(phi, u + h) - kl_ext_value(phi, u - h)) / (2.0 * h);
            let dphi_fd = (kl_ext_value(phi + h, u) - kl_ext_value(phi - h, u)) / (2.0 * h);
            assert!(
                (du_fd - kl_ext_du(phi, u)).abs() < 1e-5 * (1.0 + du_fd.abs()),
                "du at ({phi},{u}): {du_fd} vs {}",
                kl_ext_du(phi, u)
            );
            assert!(
                (dphi_fd - kl_ext_dphi(phi, u)).abs() < 1e-5 * (1.0 + dphi_fd.abs()),
                "dphi at ({phi},{u}): {dphi_fd} vs {}",
                kl_ext_dphi(phi, u)
            );
        }
    }

    /// Away from the floors the extension coincides with the plain integrand.
    #[test]
    fn extended_kl_matches_plain_kl_in_the_interior() {
        for (phi, u) in [(0.5, 0.3), (1.0, 1.0), (0.01, 0.02)] {
            let plain = phi * (phi / u).ln() - phi + u;
            assert!((kl_ext_value(phi, u) - plain).abs() < 1e-14);
        }
    }
}
