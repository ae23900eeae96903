//! Semismooth Newton solvers for the salt & pepper + Gaussian family:
//! the two-variable infimal-convolution model and the TV-L1 / TV-L2 /
//! TV-L1-L2 baselines.

use crate::error::{Error, Result};
use crate::fidelity::energy_l1l2;
use crate::grid::{div_backward, DualField, ImageGrid};
use crate::huber::{huber_tv, huber_value_mag};

use super::reduced::Reduced;
use super::tv_lin::{formula_dual, project_dual, ScalarHuberLin, TvLinearisation};
use super::{
    check_finite, l2_norm, IterationRecord, SolveFlags, SolveResult, SolverConfig, Termination,
};

/// Joint solve of the Huberised TV-IC model with L1 + L2 fidelity:
/// `min_{u,v} |Du|_gamma + lambda1 ||v||_{1,gamma} + (lambda2/2)||f-u-v||^2`.
///
/// Initialisation `u0 = f`, `v0 = 0`; each Newton step solves the reduced
/// system in `(du, dv)` and updates the duals `q`, `p` with projection onto
/// their unit balls.
pub fn ssn_l1l2(f: &ImageGrid, cfg: &SolverConfig) -> Result<SolveResult> {
    cfg.validate()?;
    let (lambda1, lambda2) = (cfg.weights.lambda1, cfg.weights.lambda2);
    if !(lambda1 > 0.0) || !(lambda2 > 0.0) {
        return Err(Error::InvalidParam(
            "ssn_l1l2 requires positive lambda1, lambda2".into(),
        ));
    }
    let gamma = cfg.gamma;
    let n = f.len();

    let mut u = f.clone();
    let mut v = ImageGrid::zeros(f.width(), f.height())?;
    let mut q = formula_dual(&u, gamma);
    let mut p = DualField::zeros(f.width(), f.height(), 1)?;

    let mut history = Vec::new();
    let mut termination = Termination::MaxIter;
    let mut converged = false;
    let resid_target = 1e-6 * (1.0 + l2_norm(f.data()));

    for _iter in 1..=cfg.max_iter {
        let tv = TvLinearisation::new(&u, &q, gamma);
        let vh = ScalarHuberLin::new(v.data(), p.channel(0), gamma);

        // Reduced right-hand side: the negative smooth gradient.
        let mut b = vec![0.0; 2 * n];
        {
            let (bu, bv) = b.split_at_mut(n);
            tv.add_grad_energy(bu);
            for i in 0..n {
                let w = f.data()[i] - u.data()[i] - v.data()[i];
                bu[i] = -bu[i] + lambda2 * w;
                bv[i] = lambda2 * w - lambda1 * vh.grad(i);
            }
        }
        check_finite(&b, "ssn_l1l2 rhs")?;

        let fid_uu = vec![lambda2; n];
        let fid_uv = vec![lambda2; n];
        let fid_vv: Vec<f64> = (0..n).map(|i| lambda1 * vh.d[i] + lambda2).collect();
        let sys = Reduced {
            tv: &tv,
            n,
            width: f.width(),
            fid_uu: &fid_uu,
            fid_uv: Some(&fid_uv),
            fid_vv: Some(&fid_vv),
        };
        let delta = match sys.solve(&b, &cfg.linsolve) {
            Ok(d) => d,
            Err(_) => {
                termination = Termination::LinSolveFailure;
                break;
            }
        };
        check_finite(&delta, "ssn_l1l2 newton step")?;

        let (du, dv) = delta.split_at(n);
        let dq = tv.dual_step(du, &q);
        let dp_vals = vh.dual_step(dv, p.channel(0));

        let step = choose_step(cfg, &b, &delta, |s| {
            let (ut, vt, qt, pt) = trial_l1l2(&u, &v, &q, &p, du, dv, &dq, &dp_vals, s);
            let energy = energy_l1l2(&ut, &vt, f, lambda1, lambda2, gamma).unwrap_or(f64::INFINITY);
            let resid = residual_l1l2(f, &ut, &vt, &qt, &pt, lambda1, lambda2, gamma);
            (energy, resid)
        });

        let (ut, vt, qt, pt) = trial_l1l2(&u, &v, &q, &p, du, dv, &dq, &dp_vals, step);
        u = ut;
        v = vt;
        q = qt;
        p = pt;
        check_finite(u.data(), "ssn_l1l2 iterate")?;

        let step_norm = step * l2_norm(&delta);
        let iterate_norm = (l2_norm(u.data()).powi(2) + l2_norm(v.data()).powi(2)).sqrt();
        let residual_norm = residual_l1l2(f, &u, &v, &q, &p, lambda1, lambda2, gamma);
        history.push(IterationRecord {
            energy: energy_l1l2(&u, &v, f, lambda1, lambda2, gamma)?,
            step_norm,
            residual_norm,
            active_a: tv.active_count(),
            active_b: vh.active_count(),
        });

        if step == 1.0
            && step_norm <= cfg.tol * iterate_norm.max(1e-30)
            && residual_norm <= resid_target
        {
            converged = true;
            termination = Termination::Tolerance;
            break;
        }
    }

    Ok(SolveResult {
        u,
        v,
        q,
        p: Some(p),
        iterations: history.len(),
        history,
        converged,
        termination,
        flags: SolveFlags::default(),
    })
}

#[allow(clippy::too_many_arguments)]
fn trial_l1l2(
    u: &ImageGrid,
    v: &ImageGrid,
    q: &DualField,
    p: &DualField,
    du: &[f64],
    dv: &[f64],
    dq: &DualField,
    dp: &[f64],
    s: f64,
) -> (ImageGrid, ImageGrid, DualField, DualField) {
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
    let mut pt = p.clone();
    for (x, d) in pt.data_mut().iter_mut().zip(dp) {
        *x += s * d;
    }
    project_dual(&mut pt);
    (ut, vt, qt, pt)
}

/// Stacked l2 norm of the four-equation primal-dual optimality residual.
pub(crate) fn residual_l1l2(
    f: &ImageGrid,
    u: &ImageGrid,
    v: &ImageGrid,
    q: &DualField,
    p: &DualField,
    lambda1: f64,
    lambda2: f64,
    gamma: f64,
) -> f64 {
    let n = f.len();
    let div_q = div_backward(q).expect("q is 2-channel");
    let q_formula = formula_dual(u, gamma);
    let mut acc = 0.0;
    for i in 0..n {
        let w = f.data()[i] - u.data()[i] - v.data()[i];
        let f1 = -div_q.data()[i] - lambda2 * w;
        let f2 = lambda1 * p.channel(0)[i] - lambda2 * w;
        let vi = v.data()[i];
        let f4 = p.channel(0)[i] - gamma * vi / (gamma * vi.abs()).max(1.0);
        acc += f1 * f1 + f2 * f2 + f4 * f4;
    }
    for (a, b) in q.data().iter().zip(q_formula.data()) {
        let d = a - b;
        acc += d * d;
    }
    acc.sqrt()
}

/// Step-size selection shared by the solvers: full step unless damping is
/// enabled, in which case the step is halved (up to 20 times) until the
/// residual norm satisfies an Armijo-type decrease and the energy does not
/// increase. If no trial qualifies, the best non-increasing trial is taken,
/// falling back to the smallest step.
pub(crate) fn choose_step(
    cfg: &SolverConfig,
    b: &[f64],
    delta: &[f64],
    evaluate: impl Fn(f64) -> (f64, f64),
) -> f64 {
    if !cfg.damping {
        return 1.0;
    }
    let (energy0, resid0) = evaluate(0.0);
    if !energy0.is_finite() {
        return 1.0;
    }
    let descent: f64 = b.iter().zip(delta).map(|(a, d)| a * d).sum();
    let e_slack = 1e-12 * (1.0 + energy0.abs());
    let r_slack = 1e-14 * (1.0 + resid0);
    let mut s = 1.0;
    let mut best: Option<(f64, f64)> = None;
    let mut smallest = s;
    for _ in 0..=20 {
        let (energy, resid) = evaluate(s);
        if energy.is_finite() && best.map_or(true, |(_, be)| energy < be) {
            best = Some((s, energy));
        }
        let armijo_energy = energy <= energy0 - 1e-4 * s * descent.max(0.0) + e_slack;
        let resid_decrease = resid <= (1.0 - 1e-4 * s) * resid0 + r_slack;
        if energy.is_finite() && armijo_energy && (resid_decrease || energy <= energy0 - e_slack) {
            return s;
        }
        smallest = s;
        s *= 0.5;
    }
    match best {
        Some((sb, eb)) if eb <= energy0 + e_slack => sb,
        _ => smallest,
    }
}

/// TV-L1 baseline `min_u |Du|_gamma + lambda1 ||f-u||_{1,gamma}`.
pub fn tv_l1(f: &ImageGrid, lambda1: f64, gamma: f64, cfg: &SolverConfig) -> Result<SolveResult> {
    solve_single(f, Some(lambda1), None, gamma, cfg)
}

/// TV-L2 baseline `min_u |Du|_gamma + (lambda2/2) ||f-u||^2`.
pub fn tv_l2(f: &ImageGrid, lambda2: f64, gamma: f64, cfg: &SolverConfig) -> Result<SolveResult> {
    solve_single(f, None, Some(lambda2), gamma, cfg)
}

/// Additive TV-L1-L2 baseline
/// `min_u |Du|_gamma + lambda1 ||f-u||_{1,gamma} + (lambda2/2) ||f-u||^2`.
pub fn tv_l1l2(
    f: &ImageGrid,
    lambda1: f64,
    lambda2: f64,
    gamma: f64,
    cfg: &SolverConfig,
) -> Result<SolveResult> {
    solve_single(f, Some(lambda1), Some(lambda2), gamma, cfg)
}

fn single_energy(
    f: &ImageGrid,
    u: &ImageGrid,
    l1: Option<f64>,
    l2: Option<f64>,
    gamma: f64,
) -> f64 {
    let mut acc = huber_tv(u, gamma);
    for i in 0..f.len() {
        let w = u.data()[i] - f.data()[i];
        if let Some(lambda1) = l1 {
            acc += lambda1 * huber_value_mag(w.abs(), gamma);
        }
        if let Some(lambda2) = l2 {
            acc += 0.5 * lambda2 * w * w;
        }
    }
    acc
}

fn residual_single(
    f: &ImageGrid,
    u: &ImageGrid,
    q: &DualField,
    p: Option<&DualField>,
    l1: Option<f64>,
    l2: Option<f64>,
    gamma: f64,
) -> f64 {
    let div_q = div_backward(q).expect("q is 2-channel");
    let q_formula = formula_dual(u, gamma);
    let mut acc = 0.0;
    for i in 0..f.len() {
        let w = u.data()[i] - f.data()[i];
        let mut f1 = -div_q.data()[i];
        if let (Some(lambda1), Some(p)) = (l1, p) {
            f1 += lambda1 * p.channel(0)[i];
            let f3 = p.channel(0)[i] - gamma * w / (gamma * w.abs()).max(1.0);
            acc += f3 * f3;
        }
        if let Some(lambda2) = l2 {
            f1 += lambda2 * w;
        }
        acc += f1 * f1;
    }
    for (a, b) in q.data().iter().zip(q_formula.data()) {
        let d = a - b;
        acc += d * d;
    }
    acc.sqrt()
}

fn solve_single(
    f: &ImageGrid,
    l1: Option<f64>,
    l2: Option<f64>,
    gamma: f64,
    cfg: &SolverConfig,
) -> Result<SolveResult> {
    cfg.validate()?;
    if let Some(lambda1) = l1 {
        if !(lambda1 > 0.0) {
            return Err(Error::InvalidParam("lambda1 must be positive".into()));
        }
    }
    if let Some(lambda2) = l2 {
        if !(lambda2 > 0.0) {
            return Err(Error::InvalidParam("lambda2 must be positive".into()));
        }
    }
    if l1.is_none() && l2.is_none() {
        return Err(Error::InvalidParam(
            "at least one fidelity weight is required".into(),
        ));
    }
    let n = f.len();
    let mut u = f.clone();
    let mut q = formula_dual(&u, gamma);
    let mut p = l1.map(|_| DualField::zeros(f.width(), f.height(), 1).expect("valid shape"));

    let mut history = Vec::new();
    let mut termination = Termination::MaxIter;
    let mut converged = false;
    let resid_target = 1e-6 * (1.0 + l2_norm(f.data()));

    for _iter in 1..=cfg.max_iter {
        let tv = TvLinearisation::new(&u, &q, gamma);
        let w: Vec<f64> = (0..n).map(|i| u.data()[i] - f.data()[i]).collect();
        let wh = l1.map(|_| {
            ScalarHuberLin::new(&w, p.as_ref().expect("p exists with l1").channel(0), gamma)
        });

        let mut b = vec![0.0; n];
        tv.add_grad_energy(&mut b);
        for i in 0..n {
            b[i] = -b[i];
            if let (Some(lambda1), Some(wh)) = (l1, wh.as_ref()) {
                b[i] -= lambda1 * wh.grad(i);
            }
            if let Some(lambda2) = l2 {
                b[i] -= lambda2 * w[i];
            }
        }
        check_finite(&b, "tv baseline rhs")?;

        let fid_uu: Vec<f64> = (0..n)
            .map(|i| {
                let mut d = 0.0;
                if let (Some(lambda1), Some(wh)) = (l1, wh.as_ref()) {
                    d += lambda1 * wh.d[i];
                }
                if let Some(lambda2) = l2 {
                    d += lambda2;
                }
                d
            })
            .collect();
        let sys = Reduced {
            tv: &tv,
            n,
            width: f.width(),
            fid_uu: &fid_uu,
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
        check_finite(&delta, "tv baseline newton step")?;

        let dq = tv.dual_step(&delta, &q);
        let dp = wh
            .as_ref()
            .map(|wh| wh.dual_step(&delta, p.as_ref().expect("p exists").channel(0)));

        let step = choose_step(cfg, &b, &delta, |s| {
            let (ut, qt, pt) = trial_single(&u, &q, p.as_ref(), &delta, &dq, dp.as_deref(), s);
            let energy = single_energy(f, &ut, l1, l2, gamma);
            let resid = residual_single(f, &ut, &qt, pt.as_ref(), l1, l2, gamma);
            (energy, resid)
        });

        let (ut, qt, pt) = trial_single(&u, &q, p.as_ref(), &delta, &dq, dp.as_deref(), step);
        u = ut;
        q = qt;
        p = pt;
        check_finite(u.data(), "tv baseline iterate")?;

        let step_norm = step * l2_norm(&delta);
        let residual_norm = residual_single(f, &u, &q, p.as_ref(), l1, l2, gamma);
        history.push(IterationRecord {
            energy: single_energy(f, &u, l1, l2, gamma),
            step_norm,
            residual_norm,
            active_a: tv.active_count(),
            active_b: wh.as_ref().map_or(0, |wh| wh.active_count()),
        });

        if step == 1.0
            && step_norm <= cfg.tol * l2_norm(u.data()).max(1e-30)
            && residual_norm <= resid_target
        {
            converged = true;
            termination = Termination::Tolerance;
            break;
        }
    }

    let v = ImageGrid::zeros(f.width(), f.height())?;
    Ok(SolveResult {
        u,
        v,
        q,
        p,
        iterations: history.len(),
        history,
        converged,
        termination,
        flags: SolveFlags::default(),
    })
}

fn trial_single(
    u: &ImageGrid,
    q: &DualField,
    p: Option<&DualField>,
    du: &[f64],
    dq: &DualField,
    dp: Option<&[f64]>,
    s: f64,
) -> (ImageGrid, DualField, Option<DualField>) {
    let mut ut = u.clone();
    for i in 0..du.len() {
        ut.data_mut()[i] += s * du[i];
    }
    let mut qt = q.clone();
    for (x, d) in qt.data_mut().iter_mut().zip(dq.data()) {
        *x += s * d;
    }
    project_dual(&mut qt);
    let pt = match (p, dp) {
        (Some(p), Some(dp)) => {
            let mut pt = p.clone();
            for (x, d) in pt.data_mut().iter_mut().zip(dp) {
                *x += s * d;
            }
            project_dual(&mut pt);
            Some(pt)
        }
        _ => None,
    };
    (ut, qt, pt)
}
