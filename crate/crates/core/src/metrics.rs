//! Quality metrics and noise-decomposition reporting.

use crate::error::{Error, Result};
use crate::grid::ImageGrid;
use crate::solvers::SolveResult;

/// Peak signal-to-noise ratio in dB with peak 1.0 (images are normalised to
/// [0,1] at load time). Returns `+inf` when the images coincide.
pub fn psnr(u: &ImageGrid, reference: &ImageGrid) -> Result<f64> {
    if !u.same_shape(reference) {
        return Err(Error::ShapeMismatch(
            u.width(),
            u.height(),
            reference.width(),
            reference.height(),
        ));
    }
    let mse: f64 = u
        .data()
        .iter()
        .zip(reference.data())
        .map(|(a, b)| (a - b) * (a - b))
        .sum::<f64>()
        / u.len() as f64;
    if mse == 0.0 {
        return Ok(f64::INFINITY);
    }
    Ok(10.0 * (1.0 / mse).log10())
}

/// The output triple of a mixed-noise solve, split into the denoised image
/// and the two noise channels.
#[derive(Debug, Clone)]
pub struct Decomposition {
    pub u: ImageGrid,
    pub v: ImageGrid,
    /// `f - v`: the image with the first noise channel removed.
    pub residual_mid: ImageGrid,
    /// `f - v - u`: the second noise channel.
    pub residual_final: ImageGrid,
}

/// Splits `f` into `u + v + residual_final` from a solve result, asserting
/// the reconstruction identity.
pub fn decompose(f: &ImageGrid, result: &SolveResult) -> Result<Decomposition> {
    decompose_parts(f, &result.u, &result.v)
}

pub fn decompose_parts(f: &ImageGrid, u: &ImageGrid, v: &ImageGrid) -> Result<Decomposition> {
    let residual_mid = f.sub(v)?;
    let residual_final = residual_mid.sub(u)?;
    // Reconstruction identity up to floating-point associativity.
    for i in 0..f.len() {
        let rebuilt = u.data()[i] + v.data()[i] + residual_final.data()[i];
        if (rebuilt - f.data()[i]).abs() > 1e-12 {
            return Err(Error::NonFinite("decomposition reconstruction"));
        }
    }
    Ok(Decomposition {
        u: u.clone(),
        v: v.clone(),
        residual_mid,
        residual_final,
    })
}

#[cfg(test)]
mod tests {
    use super::*;
    use crate::noise;
    use rand::{Rng, SeedableRng};
    use rand_chacha::ChaCha12Rng;

    #[test]
    fn identical_images_hit_the_sentinel() {
        let u = ImageGrid::constant(8, 8, 0.4).unwrap();
        assert!(psnr(&u, &u).unwrap().is_infinite());
    }

    #[test]
    fn uniform_error_closed_form() {
        // Error 0.1 everywhere: MSE = 0.01, PSNR = 20 dB.
        let a = ImageGrid::constant(8, 8, 0.5).unwrap();
        let b = ImageGrid::constant(8, 8, 0.6).unwrap();
        assert!((psnr(&a, &b).unwrap() - 20.0).abs() < 1e-12);
    }

    #[test]
    fn psnr_matches_loop_oracle_and_is_symmetric() {
        let mut rng = ChaCha12Rng::seed_from_u64(2);
        let a = ImageGrid::from_vec(6, 6, (0..36).map(|_| rng.gen_range(0.0..1.0)).collect())
            .unwrap();
        let b = ImageGrid::from_vec(6, 6, (0..36).map(|_| rng.gen_range(0.0..1.0)).collect())
            .unwrap();
        let mut mse = 0.0;
        for k in 0..6 {
            for l in 0..6 {
                let d = a.at(k, l) - b.at(k, l);
                mse += d * d;
            }
        }
        mse /= 36.0;
        let expected = 10.0 * (1.0 / mse).log10();
        assert!((psnr(&a, &b).unwrap() - expected).abs() < 1e-12);
        assert_eq!(psnr(&a, &b).unwrap(), psnr(&b, &a).unwrap());
    }

    #[test]
    fn psnr_drops_when_noise_is_added() {
        let clean = ImageGrid::constant(64, 64, 0.5).unwrap();
        let lightly = noise::add_gaussian(&clean, 0.001, 1).unwrap();
        let heavily = noise::add_gaussian(&clean, 0.02, 2).unwrap();
        let p_light = psnr(&lightly, &clean).unwrap();
        let p_heavy = psnr(&heavily, &clean).unwrap();
        assert!(p_light > p_heavy + 3.0);
    }

    #[test]
    fn psnr_rejects_shape_mismatch() {
        let a = ImageGrid::zeros(4, 4).unwrap();
        let b = ImageGrid::zeros(4, 5).unwrap();
        assert!(psnr(&a, &b).is_err());
    }

    #[test]
    fn decomposition_reconstruction_identity() {
        let mut rng = ChaCha12Rng::seed_from_u64(8);
        let f = ImageGrid::from_vec(5, 5, (0..25).map(|_| rng.gen_range(0.0..1.0)).collect())
            .unwrap();
        let u = ImageGrid::from_vec(5, 5, (0..25).map(|_| rng.gen_range(0.0..1.0)).collect())
            .unwrap();
        let v = ImageGrid::from_vec(5, 5, (0..25).map(|_| rng.gen_range(-0.5..0.5)).collect())
            .unwrap();
        let d = decompose_parts(&f, &u, &v).unwrap();
        for i in 0..f.len() {
            let rebuilt = d.u.data()[i] + d.v.data()[i] + d.residual_final.data()[i];
            assert!((rebuilt - f.data()[i]).abs() <= 1e-12);
        }
    }

    #[test]
    fn zero_v_leaves_residuals_against_u() {
        let f = ImageGrid::constant(4, 4, 0.8).unwrap();
        let u = ImageGrid::constant(4, 4, 0.7).unwrap();
        let v = ImageGrid::zeros(4, 4).unwrap();
        let d = decompose_parts(&f, &u, &v).unwrap();
        assert_eq!(d.residual_mid, f);
        for &x in d.residual_final.data() {
            assert!((x - 0.1).abs() < 1e-15);
        }
    }
}
