//! Data-fidelity energies and the pointwise inner minimisers of both
//! infimal-convolution fidelities.
//!
//! Both inner problems decompose per pixel. The L1-L2 minimiser is the soft
//! threshold at `lambda1/lambda2`; its value equals the scaled Huber envelope
//! of the residual. The L2-KL minimiser solves a strictly convex scalar
//! problem per pixel by safeguarded Newton/bisection.

use crate::error::{Error, Result};
use crate::grid::{norm_l2_sq, ImageGrid};
use crate::huber::{huber_tv, huber_value_mag};

/// Positivity floor applied to `u` inside logarithms and to `f - v`.
pub const POSITIVITY_FLOOR: f64 = 1e-8;

/// Fidelity weights `lambda1`, `lambda2` of the infimal-convolution models.
#[derive(Debug, Clone, Copy, PartialEq)]
pub struct FidelityWeights {
    pub lambda1: f64,
    pub lambda2: f64,
}

impl FidelityWeights {
    pub fn new(lambda1: f64, lambda2: f64) -> Result<Self> {
        if !(lambda1 > 0.0) || !(lambda2 > 0.0) {
            return Err(Error::InvalidParam(format!(
                "fidelity weights must be positive, got lambda1={lambda1}, lambda2={lambda2}"
            )));
        }
        Ok(Self { lambda1, lambda2 })
    }
}

/// Kullback-Leibler divergence `sum(phi log(phi/psi) - phi + psi)` with the
/// convention `0 log 0 = 0`. Returns `+inf` if `phi > 0` somewhere `psi = 0`.
pub fn kl_divergence(phi: &ImageGrid, psi: &ImageGrid) -> Result<f64> {
    if !phi.same_shape(psi) {
        return Err(Error::ShapeMismatch(
            phi.width(),
            phi.height(),
            psi.width(),
            psi.height(),
        ));
    }
    let mut acc = 0.0;
    for (&p, &q) in phi.data().iter().zip(psi.data()) {
        if p < 0.0 || q < 0.0 {
            return Err(Error::InvalidParam(
                "kl_divergence requires nonnegative inputs".into(),
            ));
        }
        acc += kl_term(p, q);
        if acc.is_infinite() {
            return Ok(f64::INFINITY);
        }
    }
    Ok(acc)
}

#[inline]
fn kl_term(phi: f64, psi: f64) -> f64 {
    if phi == 0.0 {
        psi
    } else if psi == 0.0 {
        f64::INFINITY
    } else {
        phi * (phi / psi).ln() - phi + psi
    }
}

/// Checks the KL estimate
/// `||phi-psi||_1^2 <= (2/3 ||phi||_1 + 4/3 ||psi||_1) * D_KL(phi,psi)`
/// with 1e-10 slack.
pub fn kl_l1_estimate_check(phi: &ImageGrid, psi: &ImageGrid) -> Result<bool> {
    let d = kl_divergence(phi, psi)?;
    let l1_diff: f64 = phi
        .data()
        .iter()
        .zip(psi.data())
        .map(|(a, b)| (a - b).abs())
        .sum();
    let phi_l1: f64 = phi.data().iter().sum();
    let psi_l1: f64 = psi.data().iter().sum();
    if d.is_infinite() {
        return Ok(true);
    }
    Ok(l1_diff * l1_diff <= (2.0 / 3.0 * phi_l1 + 4.0 / 3.0 * psi_l1) * d + 1e-10)
}

/// Pointwise minimiser of `lambda1 |v| + (lambda2/2)(r - v)^2`: the soft
/// threshold of `r` at `lambda1/lambda2`. Returns the minimiser and the
/// attained fidelity value.
pub fn ic_l1l2_inner_min(residual: &ImageGrid, lambda1: f64, lambda2: f64) -> (ImageGrid, f64) {
    let threshold = lambda1 / lambda2;
    let v = residual.map(|r| soft_threshold(r, threshold));
    let mut value = 0.0;
    for (&r, &vi) in residual.data().iter().zip(v.data()) {
        let w = r - vi;
        value += lambda1 * vi.abs() + 0.5 * lambda2 * w * w;
    }
    (v, value)
}

#[inline]
pub fn soft_threshold(r: f64, threshold: f64) -> f64 {
    r.signum() * (r.abs() - threshold).max(0.0)
}

/// The L1-L2 fidelity value via the Moreau-envelope identity: `lambda1` times
/// the Huber envelope of the residual with knee parameter `lambda2/lambda1`.
pub fn ic_l1l2_value_via_huber(residual: &ImageGrid, lambda1: f64, lambda2: f64) -> f64 {
    let knee = lambda2 / lambda1;
    residual
        .data()
        .iter()
        .map(|&r| lambda1 * huber_value_mag(r.abs(), knee))
        .sum()
}

/// Result of the pointwise L2-KL inner minimisation.
#[derive(Debug, Clone)]
pub struct KlInnerMin {
    pub v: ImageGrid,
    pub value: f64,
    /// Set when some pixel had `f <= 0`, where the feasible set degenerates
    /// and `v = f - floor` is returned for that pixel.
    pub degenerate: bool,
}

/// Pointwise minimiser of `(lambda1/2) v^2 + lambda2 (phi log(phi/u) - phi + u)`
/// with `phi = f - v`, i.e. the root of `lambda1 v = lambda2 log((f-v)/u)` on
/// `v < f`. `u` is clamped below at `floor`.
pub fn ic_l2kl_inner_min(
    f: &ImageGrid,
    u: &ImageGrid,
    lambda1: f64,
    lambda2: f64,
    floor: f64,
) -> Result<KlInnerMin> {
    if !f.same_shape(u) {
        return Err(Error::ShapeMismatch(
            f.width(),
            f.height(),
            u.width(),
            u.height(),
        ));
    }
    if !(lambda1 > 0.0) || !(lambda2 > 0.0) {
        return Err(Error::InvalidParam(
            "ic_l2kl_inner_min requires positive weights".into(),
        ));
    }
    let f_sup = f.max_abs();
    let mut v = ImageGrid::zeros(f.width(), f.height())?;
    let mut degenerate = false;
    for i in 0..f.len() {
        let fi = f.data()[i];
        let ui = u.data()[i].max(floor);
        if fi <= 0.0 {
            degenerate = true;
            v.data_mut()[i] = fi - floor;
        } else {
            v.data_mut()[i] = kl_scalar_root(fi, ui, lambda1, lambda2, f_sup, floor);
        }
    }
    let mut value = 0.5 * lambda1 * norm_l2_sq(&v);
    for i in 0..f.len() {
        let phi = (f.data()[i] - v.data()[i]).max(0.0);
        let psi = u.data()[i].max(floor);
        value += lambda2 * kl_term(phi, psi);
    }
    Ok(KlInnerMin {
        v,
        value,
        degenerate,
    })
}

/// Root of `g(v) = lambda1 v - lambda2 log((f-v)/u)` on `(-inf, f)` by Newton
/// with bisection safeguard. `g` is strictly increasing there.
fn kl_scalar_root(f: f64, u: f64, lambda1: f64, lambda2: f64, f_sup: f64, floor: f64) -> f64 {
    let g = |v: f64| lambda1 * v - lambda2 * ((f - v) / u).ln();
    let mut lo = -f_sup.max(1.0) * 10.0;
    let hi = f - floor.min(f * 1e-12);
    // Widen the lower bracket if the root sits below the default.
    let mut guard = 0;
    while g(lo) > 0.0 && guard < 200 {
        lo *= 2.0;
        guard += 1;
    }
    let mut hi = hi;
    if g(hi) < 0.0 {
        // Root is squeezed against f; the bracket end is the best estimate.
        return hi;
    }
    let mut x = 0.0_f64.clamp(lo, hi);
    for _ in 0..200 {
        let gx = g(x);
        if gx.abs() <= 1e-12 {
            return x;
        }
        if gx > 0.0 {
            hi = x;
        } else {
            lo = x;
        }
        let slope = lambda1 + lambda2 / (f - x);
        let newton = x - gx / slope;
        x = if newton > lo && newton < hi {
            newton
        } else {
            0.5 * (lo + hi)
        };
        if hi - lo <= f64::EPSILON * (hi.abs().max(lo.abs()).max(1.0)) {
            return x;
        }
    }
    x
}

/// Full Huberised L1-L2 objective
/// `huber_tv(u) + lambda1 ||v||_{1,gamma} + (lambda2/2) ||f-u-v||^2`.
pub fn energy_l1l2(
    u: &ImageGrid,
    v: &ImageGrid,
    f: &ImageGrid,
    lambda1: f64,
    lambda2: f64,
    gamma: f64,
) -> Result<f64> {
    if !u.same_shape(v) || !u.same_shape(f) {
        return Err(Error::ShapeMismatch(
            u.width(),
            u.height(),
            f.width(),
            f.height(),
        ));
    }
    let mut acc = huber_tv(u, gamma);
    for i in 0..u.len() {
        let w = f.data()[i] - u.data()[i] - v.data()[i];
        acc += lambda1 * huber_value_mag(v.data()[i].abs(), gamma) + 0.5 * lambda2 * w * w;
    }
    Ok(acc)
}

/// Full Huberised L2-KL objective (without penalty terms)
/// `huber_tv(u) + (lambda1/2)||v||^2 + lambda2 D_KL(f-v, u)`, with the
/// positivity floor applied inside the KL term.
pub fn energy_l2kl(
    u: &ImageGrid,
    v: &ImageGrid,
    f: &ImageGrid,
    lambda1: f64,
    lambda2: f64,
    gamma: f64,
) -> Result<f64> {
    if !u.same_shape(v) || !u.same_shape(f) {
        return Err(Error::ShapeMismatch(
            u.width(),
            u.height(),
            f.width(),
            f.height(),
        ));
    }
    let mut acc = huber_tv(u, gamma);
    for i in 0..u.len() {
        let vi = v.data()[i];
        let phi = (f.data()[i] - vi).max(0.0);
        let psi = u.data()[i].max(POSITIVITY_FLOOR);
        acc += 0.5 * lambda1 * vi * vi + lambda2 * kl_term(phi, psi);
    }
    Ok(acc)
}
