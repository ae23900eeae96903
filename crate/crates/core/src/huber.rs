//! Huber smoothing of absolute values and of the TV energy.
//!
//! `huber_value`/`huber_grad` are the max-form pair the Newton solvers
//! consume; `smooth_huber` is the C² variant used only by the parameter
//! learning harness.

use crate::error::{Error, Result};
use crate::grid::ImageGrid;

/// Smoothing parameter for the Huber regularisation; the quadratic/linear
/// knee sits at `|z| = 1/gamma`.
#[derive(Debug, Clone, Copy, PartialEq)]
pub struct HuberParams {
    pub gamma: f64,
}

impl HuberParams {
    pub fn new(gamma: f64) -> Result<Self> {
        if !(gamma > 0.0) || !gamma.is_finite() {
            return Err(Error::InvalidParam(format!(
                "huber gamma must be positive and finite, got {gamma}"
            )));
        }
        Ok(Self { gamma })
    }
}

impl Default for HuberParams {
    fn default() -> Self {
        Self { gamma: 1e5 }
    }
}

/// Huber value as a function of the magnitude `|z| >= 0`.
#[inline]
pub fn huber_value_mag(mag: f64, gamma: f64) -> f64 {
    if mag >= 1.0 / gamma {
        mag - 0.5 / gamma
    } else {
        0.5 * gamma * mag * mag
    }
}

/// Huber regularisation of `|z|` for a vector argument (Euclidean magnitude).
pub fn huber_value(z: &[f64], gamma: f64) -> f64 {
    huber_value_mag(magnitude(z), gamma)
}

/// Max-form Huber gradient `gamma z / max(gamma |z|, 1)`; its magnitude never
/// exceeds 1.
pub fn huber_grad(z: &[f64], gamma: f64) -> Vec<f64> {
    let scale = huber_grad_scale(magnitude(z), gamma);
    z.iter().map(|&x| scale * x).collect()
}

/// Multiplier turning `z` into the max-form Huber gradient.
#[inline]
pub fn huber_grad_scale(mag: f64, gamma: f64) -> f64 {
    gamma / (gamma * mag).max(1.0)
}

/// Huberised total variation: sum over pixels of the Huber value of the
/// forward-difference gradient 2-vector.
pub fn huber_tv(u: &ImageGrid, gamma: f64) -> f64 {
    let (w, h) = (u.width(), u.height());
    let d = u.data();
    let mut acc = 0.0;
    for k in 0..h {
        for l in 0..w {
            let i = k * w + l;
            let d0 = if k + 1 < h { d[i + w] - d[i] } else { 0.0 };
            let d1 = if l + 1 < w { d[i + 1] - d[i] } else { 0.0 };
            acc += huber_value_mag((d0 * d0 + d1 * d1).sqrt(), gamma);
        }
    }
    acc
}

/// Exact (non-smoothed) discrete total variation, for comparison against
/// [`huber_tv`].
pub fn exact_tv(u: &ImageGrid) -> f64 {
    let (w, h) = (u.width(), u.height());
    let d = u.data();
    let mut acc = 0.0;
    for k in 0..h {
        for l in 0..w {
            let i = k * w + l;
            let d0 = if k + 1 < h { d[i + w] - d[i] } else { 0.0 };
            let d1 = if l + 1 < w { d[i + 1] - d[i] } else { 0.0 };
            acc += (d0 * d0 + d1 * d1).sqrt();
        }
    }
    acc
}

/// C² Huber-type regularisation `h_gamma`, equal to the max-form gradient
/// outside the transition band `gamma|z| - 1 in (-1/(2 gamma), 1/(2 gamma))`.
pub fn smooth_huber(z: &[f64], gamma: f64) -> Vec<f64> {
    let mag = magnitude(z);
    let scale = smooth_huber_scale(mag, gamma);
    z.iter().map(|&x| scale * x).collect()
}

/// Multiplier turning `z` into `h_gamma(z)`.
pub fn smooth_huber_scale(mag: f64, gamma: f64) -> f64 {
    let t = gamma * mag - 1.0;
    let half = 0.5 / gamma;
    if t <= -half {
        gamma
    } else if t >= half {
        1.0 / mag
    } else {
        let s = 1.0 - gamma * mag + half;
        (1.0 - 0.5 * gamma * s * s) / mag
    }
}

#[inline]
fn magnitude(z: &[f64]) -> f64 {
    z.iter().map(|x| x * x).sum::<f64>().sqrt()
}

#[cfg(test)]
mod tests {
    use super::*;
    use rand::{Rng, SeedableRng};
    use rand_chacha::ChaCha12Rng;

    #[test]
    fn value_at_zero() {
        assert_eq!(huber_value(&[0.0], 1e5), 0.0);
        assert_eq!(huber_value(&[0.0, 0.0], 1e5), 0.0);
    }

    #[test]
    fn linear_branch_value() {
        // gamma = 1e5, |z| = 2e-5 >= 1/gamma: value is 2e-5 - 5e-6.
        let v = huber_value(&[2e-5], 1e5);
        assert!((v - 1.5e-5).abs() < 1e-18);
    }

    #[test]
    fn knee_is_continuous() {
        let gamma = 1e5;
        let mag: f64 = 1.0 / gamma;
        let linear = mag - 0.5 / gamma;
        let quad = 0.5 * gamma * mag * mag;
        assert!((linear - quad).abs() < 1e-18);
        assert!((huber_value(&[mag], gamma) - 0.5 / gamma).abs() < 1e-18);
    }

    #[test]
    fn grad_at_zero_and_saturation() {
        assert_eq!(huber_grad(&[0.0, 0.0], 1e5), vec![0.0, 0.0]);
        // |z| far above the knee: unit vector.
        let g = huber_grad(&[3.0, 4.0], 1e5);
        assert!((g[0] - 0.6).abs() < 1e-12);
        assert!((g[1] - 0.8).abs() < 1e-12);
    }

    #[test]
    fn grad_matches_central_differences() {
        // Central-difference oracle away from the knee, eps = 1e-6.
        let gamma = 10.0;
        let eps = 1e-6;
        let points: [&[f64]; 4] = [&[0.5, -0.3], &[0.01, 0.02], &[-2.0, 1.0], &[0.001]];
        for z in points {
            let g = huber_grad(z, gamma);
            for (axis, &gi) in g.iter().enumerate() {
                let mut zp = z.to_vec();
                let mut zm = z.to_vec();
                zp[axis] += eps;
                zm[axis] -= eps;
                let fd = (huber_value(&zp, gamma) - huber_value(&zm, gamma)) / (2.0 * eps);
                assert!(
                    (fd - gi).abs() < 1e-8,
                    "axis {axis}: fd {fd} vs grad {gi}"
                );
            }
        }
    }

    #[test]
    fn grad_magnitude_bounded_by_one() {
        let mut rng = ChaCha12Rng::seed_from_u64(5);
        for _ in 0..200 {
            let z = [rng.gen_range(-10.0..10.0), rng.gen_range(-10.0..10.0)];
            let gamma = 10f64.powf(rng.gen_range(0.0..6.0));
            let g = huber_grad(&z, gamma);
            assert!(magnitude(&g) <= 1.0 + 1e-12);
        }
    }

    #[test]
    fn huber_tv_of_constant_is_zero() {
        let u = crate::grid::ImageGrid::constant(8, 8, 0.4).unwrap();
        assert_eq!(huber_tv(&u, 1e5), 0.0);
    }

    #[test]
    fn huber_tv_brackets_exact_tv() {
        let mut rng = ChaCha12Rng::seed_from_u64(21);
        let data: Vec<f64> = (0..64).map(|_| rng.gen_range(0.0..1.0)).collect();
        let u = crate::grid::ImageGrid::from_vec(8, 8, data).unwrap();
        let tv = exact_tv(&u);
        for gamma in [1e2, 1e3, 1e4, 1e5] {
            let htv = huber_tv(&u, gamma);
            assert!(htv <= tv + 1e-12);
            assert!(tv <= htv + 64.0 / (2.0 * gamma) + 1e-12);
        }
    }

    #[test]
    fn huber_tv_increases_toward_exact_tv() {
        let mut rng = ChaCha12Rng::seed_from_u64(22);
        let data: Vec<f64> = (0..64).map(|_| rng.gen_range(0.0..1.0)).collect();
        let u = crate::grid::ImageGrid::from_vec(8, 8, data).unwrap();
        let tv = exact_tv(&u);
        let mut prev = f64::NEG_INFINITY;
        for gamma in [1e2, 1e3, 1e4, 1e5] {
            let htv = huber_tv(&u, gamma);
            assert!(htv >= prev);
            assert!(htv <= tv + 1e-12);
            prev = htv;
        }
    }

    #[test]
    fn value_is_midpoint_convex() {
        let mut rng = ChaCha12Rng::seed_from_u64(9);
        for _ in 0..200 {
            let a = [rng.gen_range(-2.0..2.0), rng.gen_range(-2.0..2.0)];
            let b = [rng.gen_range(-2.0..2.0), rng.gen_range(-2.0..2.0)];
            let gamma = 10f64.powf(rng.gen_range(0.0..5.0));
            let mid = [(a[0] + b[0]) / 2.0, (a[1] + b[1]) / 2.0];
            let lhs = huber_value(&mid, gamma);
            let rhs = 0.5 * (huber_value(&a, gamma) + huber_value(&b, gamma));
            assert!(lhs <= rhs + 1e-12);
        }
    }

    #[test]
    fn value_monotone_in_gamma_below_abs() {
        let mut rng = ChaCha12Rng::seed_from_u64(10);
        for _ in 0..200 {
            let z = [rng.gen_range(-2.0..2.0)];
            let g1 = 10f64.powf(rng.gen_range(0.0..4.0));
            let g2 = g1 * 10f64.powf(rng.gen_range(0.0..2.0));
            let v1 = huber_value(&z, g1);
            let v2 = huber_value(&z, g2);
            assert!(v1 <= v2 + 1e-15);
            assert!(v2 <= z[0].abs() + 1e-15);
        }
    }

    #[test]
    fn smooth_huber_at_zero_and_saturation() {
        assert_eq!(smooth_huber(&[0.0, 0.0], 1e3), vec![0.0, 0.0]);
        let h = smooth_huber(&[3.0, -4.0], 1e3);
        assert!((h[0] - 0.6).abs() < 1e-12);
        assert!((h[1] + 0.8).abs() < 1e-12);
    }

    #[test]
    fn smooth_huber_matches_max_form_outside_band() {
        let gamma = 50.0;
        // Below the band: gamma|z| - 1 <= -1/(2 gamma).
        let z_low = [0.5 * (1.0 - 0.5 / gamma) / gamma];
        assert!((smooth_huber(&z_low, gamma)[0] - huber_grad(&z_low, gamma)[0]).abs() < 1e-14);
        // Above the band.
        let z_high = [2.0 * (1.0 + 0.5 / gamma) / gamma];
        assert!((smooth_huber(&z_high, gamma)[0] - huber_grad(&z_high, gamma)[0]).abs() < 1e-14);
    }

    #[test]
    fn smooth_huber_continuous_at_band_edges() {
        for gamma in [10.0, 1e3, 1e5] {
            for sign in [-1.0, 1.0] {
                let edge = (1.0 + sign * 0.5 / gamma) / gamma;
                let below = edge * (1.0 - 1e-9);
                let above = edge * (1.0 + 1e-9);
                let vb = smooth_huber(&[below], gamma)[0];
                let va = smooth_huber(&[above], gamma)[0];
                assert!(
                    (va - vb).abs() < 1e-6,
                    "gamma={gamma} sign={sign}: {vb} vs {va}"
                );
            }
        }
    }

    #[test]
    fn smooth_huber_derivative_continuous_at_band_edges() {
        // Central differences on either side of each band edge.
        let gamma = 20.0;
        let eps = 1e-7;
        for sign in [-1.0, 1.0] {
            let edge = (1.0 + sign * 0.5 / gamma) / gamma;
            let lo = edge - 10.0 * eps;
            let hi = edge + 10.0 * eps;
            let d_lo =
                (smooth_huber(&[lo + eps], gamma)[0] - smooth_huber(&[lo - eps], gamma)[0])
                    / (2.0 * eps);
            let d_hi =
                (smooth_huber(&[hi + eps], gamma)[0] - smooth_huber(&[hi - eps], gamma)[0])
                    / (2.0 * eps);
            assert!(
                (d_lo - d_hi).abs() < 1e-2 * gamma,
                "edge {edge}: {d_lo} vs {d_hi}"
            );
        }
    }

    #[test]
    fn params_validation() {
        assert!(HuberParams::new(0.0).is_err());
        assert!(HuberParams::new(-1.0).is_err());
        assert!(HuberParams::new(f64::NAN).is_err());
        assert_eq!(HuberParams::default().gamma, 1e5);
    }
}
