//! Synthetic corruption of ground-truth images: salt & pepper, additive
//! Gaussian, and scaled Poisson noise.
//!
//! All generators are deterministic for a fixed seed. Each noise kind draws
//! from its own ChaCha12 stream so that e.g. changing the salt & pepper
//! density does not perturb the Gaussian samples.

use rand::{Rng, SeedableRng};
use rand_chacha::ChaCha12Rng;
use rand_distr::{Distribution, Normal, Poisson};

use crate::error::{Error, Result};
use crate::grid::ImageGrid;

/// RNG algorithm recorded in experiment metadata.
pub const RNG_ALGORITHM: &str = "chacha12";

const STREAM_SALT_PEPPER: u64 = 1;
const STREAM_GAUSSIAN: u64 = 2;
const STREAM_POISSON: u64 = 3;

/// Noise recipe applied to a clean image.
#[derive(Debug, Clone, Copy, PartialEq)]
pub struct NoiseSpec {
    /// Fraction of pixels replaced by salt & pepper values.
    pub sp_density: f64,
    /// Variance of the additive zero-mean Gaussian component.
    pub gauss_var: f64,
    /// Whether a Poisson component is applied.
    pub poisson: bool,
    /// Intensity scaling before Poisson sampling: `f = Pois(peak*u)/peak`.
    /// `peak = 1` reproduces the literal unscaled model.
    pub poisson_peak: f64,
    pub seed: u64,
}

impl Default for NoiseSpec {
    fn default() -> Self {
        Self {
            sp_density: 0.0,
            gauss_var: 0.0,
            poisson: false,
            poisson_peak: 100.0,
            seed: 0,
        }
    }
}

impl NoiseSpec {
    pub fn validate(&self) -> Result<()> {
        if !(0.0..=1.0).contains(&self.sp_density) {
            return Err(Error::InvalidParam(format!(
                "salt & pepper density must be in [0,1], got {}",
                self.sp_density
            )));
        }
        if self.gauss_var < 0.0 {
            return Err(Error::InvalidParam(format!(
                "gaussian variance must be nonnegative, got {}",
                self.gauss_var
            )));
        }
        if !(self.poisson_peak > 0.0) {
            return Err(Error::InvalidParam(format!(
                "poisson peak must be positive, got {}",
                self.poisson_peak
            )));
        }
        Ok(())
    }
}

/// Everything produced by one corruption run.
#[derive(Debug, Clone)]
pub struct Corruption {
    pub noisy: ImageGrid,
    /// 1.0 where a pixel was replaced by salt & pepper, 0.0 elsewhere.
    pub sp_mask: Option<ImageGrid>,
    /// Set when negative intensities had to be clamped before Poisson
    /// sampling.
    pub clamped_for_poisson: bool,
}

fn stream_rng(seed: u64, stream: u64) -> ChaCha12Rng {
    let mut rng = ChaCha12Rng::seed_from_u64(seed);
    rng.set_stream(stream);
    rng
}

/// Replaces each pixel independently with probability `d` by 0 or 1 (each
/// with probability 1/2).
pub fn add_salt_pepper(u: &ImageGrid, density: f64, seed: u64) -> Result<ImageGrid> {
    Ok(add_salt_pepper_masked(u, density, seed)?.0)
}

/// As [`add_salt_pepper`], also returning the corruption mask.
pub fn add_salt_pepper_masked(
    u: &ImageGrid,
    density: f64,
    seed: u64,
) -> Result<(ImageGrid, ImageGrid)> {
    if !(0.0..=1.0).contains(&density) {
        return Err(Error::InvalidParam(format!(
            "salt & pepper density must be in [0,1], got {density}"
        )));
    }
    let mut rng = stream_rng(seed, STREAM_SALT_PEPPER);
    let mut out = u.clone();
    let mut mask = ImageGrid::zeros(u.width(), u.height())?;
    for (x, m) in out.data_mut().iter_mut().zip(mask.data_mut()) {
        // Two draws per pixel keeps the stream aligned regardless of hits.
        let hit: f64 = rng.gen();
        let salt: f64 = rng.gen();
        if hit < density {
            *x = if salt < 0.5 { 0.0 } else { 1.0 };
            *m = 1.0;
        }
    }
    Ok((out, mask))
}

/// Adds i.i.d. zero-mean Gaussian samples of the given variance. No clipping:
/// the solvers must tolerate out-of-range data.
pub fn add_gaussian(u: &ImageGrid, variance: f64, seed: u64) -> Result<ImageGrid> {
    if variance < 0.0 {
        return Err(Error::InvalidParam(format!(
            "gaussian variance must be nonnegative, got {variance}"
        )));
    }
    if variance == 0.0 {
        return Ok(u.clone());
    }
    let normal = Normal::new(0.0, variance.sqrt())
        .map_err(|e| Error::InvalidParam(format!("gaussian setup: {e}")))?;
    let mut rng = stream_rng(seed, STREAM_GAUSSIAN);
    let mut out = u.clone();
    for x in out.data_mut() {
        *x += normal.sample(&mut rng);
    }
    Ok(out)
}

/// Scaled Poisson corruption `f = Pois(peak*u)/peak`, so `E[f] = u`.
pub fn add_poisson(u: &ImageGrid, peak: f64, seed: u64) -> Result<ImageGrid> {
    Ok(add_poisson_flagged(u, peak, seed)?.0)
}

/// As [`add_poisson`], also reporting whether negative input intensities were
/// clamped to zero.
pub fn add_poisson_flagged(u: &ImageGrid, peak: f64, seed: u64) -> Result<(ImageGrid, bool)> {
    if !(peak > 0.0) {
        return Err(Error::InvalidParam(format!(
            "poisson peak must be positive, got {peak}"
        )));
    }
    let mut rng = stream_rng(seed, STREAM_POISSON);
    let mut out = u.clone();
    let mut clamped = false;
    for x in out.data_mut() {
        let lam = if *x < 0.0 {
            clamped = true;
            0.0
        } else {
            peak * *x
        };
        *x = if lam > 0.0 {
            let pois =
                Poisson::new(lam).map_err(|e| Error::InvalidParam(format!("poisson setup: {e}")))?;
            pois.sample(&mut rng) / peak
        } else {
            0.0
        };
    }
    Ok((out, clamped))
}

/// Applies the full recipe: salt & pepper first, then Poisson, then Gaussian
/// (the additive Gaussian component always comes last).
pub fn corrupt(u: &ImageGrid, spec: &NoiseSpec) -> Result<Corruption> {
    spec.validate()?;
    let mut sp_mask = None;
    let mut clamped = false;
    let mut img = u.clone();
    if spec.sp_density > 0.0 {
        let (noisy, mask) = add_salt_pepper_masked(&img, spec.sp_density, spec.seed)?;
        img = noisy;
        sp_mask = Some(mask);
    }
    if spec.poisson {
        let (noisy, c) = add_poisson_flagged(&img, spec.poisson_peak, spec.seed)?;
        img = noisy;
        clamped = c;
    }
    if spec.gauss_var > 0.0 {
        img = add_gaussian(&img, spec.gauss_var, spec.seed)?;
    }
    Ok(Corruption {
        noisy: img,
        sp_mask,
        clamped_for_poisson: clamped,
    })
}

#[cfg(test)]
mod tests {
    use super::*;

    fn flat(w: usize, h: usize, v: f64) -> ImageGrid {
        ImageGrid::constant(w, h, v).unwrap()
    }

    #[test]
    fn salt_pepper_zero_density_is_identity() {
        let u = flat(8, 8, 0.3);
        let f = add_salt_pepper(&u, 0.0, 1).unwrap();
        assert_eq!(u, f);
    }

    #[test]
    fn salt_pepper_full_density_is_binary() {
        let u = flat(16, 16, 0.3);
        let f = add_salt_pepper(&u, 1.0, 1).unwrap();
        assert!(f.data().iter().all(|&x| x == 0.0 || x == 1.0));
    }

    #[test]
    fn salt_pepper_density_within_binomial_band() {
        // d = 0.05 on 312x312: 3-sigma binomial band is well inside +-0.01.
        let u = flat(312, 312, 0.5);
        let (f, mask) = add_salt_pepper_masked(&u, 0.05, 7).unwrap();
        let hits = mask.data().iter().filter(|&&m| m == 1.0).count();
        let frac = hits as f64 / (312.0 * 312.0);
        assert!((frac - 0.05).abs() <= 0.01, "corrupted fraction {frac}");
        // Mask agrees with actual changes (value 0.5 can never be a hit value).
        for (x, m) in f.data().iter().zip(mask.data()) {
            if *m == 1.0 {
                assert!(*x == 0.0 || *x == 1.0);
            } else {
                assert_eq!(*x, 0.5);
            }
        }
    }

    #[test]
    fn salt_pepper_rejects_bad_density() {
        let u = flat(4, 4, 0.5);
        assert!(add_salt_pepper(&u, -0.1, 0).is_err());
        assert!(add_salt_pepper(&u, 1.1, 0).is_err());
    }

    #[test]
    fn gaussian_zero_variance_is_identity() {
        let u = flat(8, 8, 0.2);
        let f = add_gaussian(&u, 0.0, 3).unwrap();
        assert_eq!(u, f);
    }

    #[test]
    fn gaussian_rejects_negative_variance() {
        let u = flat(4, 4, 0.2);
        assert!(add_gaussian(&u, -0.01, 0).is_err());
    }

    #[test]
    fn gaussian_moments() {
        let n = 256 * 256;
        let var = 0.01;
        let u = flat(256, 256, 0.5);
        let f = add_gaussian(&u, var, 11).unwrap();
        let diffs: Vec<f64> = f.data().iter().zip(u.data()).map(|(a, b)| a - b).collect();
        let mean = diffs.iter().sum::<f64>() / n as f64;
        // CLT: 3 sigma / sqrt(n) band around zero.
        assert!(mean.abs() <= 3.0 * var.sqrt() / 256.0, "sample mean {mean}");
        let sample_var = diffs.iter().map(|d| (d - mean) * (d - mean)).sum::<f64>() / n as f64;
        assert!(
            (sample_var - var).abs() <= 0.1 * var,
            "sample variance {sample_var}"
        );
    }

    #[test]
    fn poisson_zero_input_stays_zero() {
        let u = flat(8, 8, 0.0);
        let f = add_poisson(&u, 100.0, 5).unwrap();
        assert!(f.data().iter().all(|&x| x == 0.0));
    }

    #[test]
    fn poisson_moments_on_constant_patch() {
        let peak = 100.0;
        let u = flat(100, 100, 0.5);
        let f = add_poisson(&u, peak, 13).unwrap();
        let n = 10_000.0;
        let mean = f.data().iter().sum::<f64>() / n;
        let sigma = (0.5 / peak / n).sqrt();
        assert!((mean - 0.5).abs() <= 3.0 * sigma, "sample mean {mean}");
        let var = f.data().iter().map(|x| (x - mean) * (x - mean)).sum::<f64>() / n;
        let expected_var = 0.5 / peak;
        assert!(
            (var - expected_var).abs() <= 0.1 * expected_var,
            "sample variance {var}"
        );
    }

    #[test]
    fn poisson_rejects_bad_peak_and_flags_clamping() {
        let u = flat(4, 4, 0.5);
        assert!(add_poisson(&u, 0.0, 0).is_err());
        let mut neg = flat(4, 4, 0.5);
        neg.set(1, 1, -0.2);
        let (_, clamped) = add_poisson_flagged(&neg, 100.0, 0).unwrap();
        assert!(clamped);
    }

    #[test]
    fn identical_seeds_are_bit_identical() {
        let u = flat(32, 32, 0.4);
        let spec = NoiseSpec {
            sp_density: 0.1,
            gauss_var: 0.005,
            poisson: true,
            poisson_peak: 50.0,
            seed: 99,
        };
        let a = corrupt(&u, &spec).unwrap();
        let b = corrupt(&u, &spec).unwrap();
        assert_eq!(a.noisy, b.noisy);
        assert_eq!(a.sp_mask, b.sp_mask);
    }

    #[test]
    fn streams_are_independent_of_density() {
        // The Gaussian samples must not shift when the s&p density changes.
        let u = flat(16, 16, 0.5);
        let spec_a = NoiseSpec {
            sp_density: 0.0,
            gauss_var: 0.01,
            seed: 42,
            ..NoiseSpec::default()
        };
        let spec_b = NoiseSpec {
            sp_density: 0.5,
            ..spec_a
        };
        let a = corrupt(&u, &spec_a).unwrap();
        let b = corrupt(&u, &spec_b).unwrap();
        let mask = b.sp_mask.unwrap();
        for i in 0..u.len() {
            if mask.data()[i] == 0.0 {
                assert_eq!(a.noisy.data()[i], b.noisy.data()[i]);
            }
        }
    }
}
