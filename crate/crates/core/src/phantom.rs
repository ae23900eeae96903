//! Synthetic test images for experiments and the test suites.

use crate::grid::ImageGrid;

/// Piecewise-constant phantom: a dark background with two rectangles and a
/// disk at distinct gray levels. Suitable for salt & pepper + Gaussian
/// experiments.
pub fn piecewise(size: usize) -> ImageGrid {
    let mut img = ImageGrid::constant(size, size, 0.2).expect("size >= 2");
    let s = size as f64;
    for k in 0..size {
        for l in 0..size {
            let (y, x) = (k as f64 / s, l as f64 / s);
            if (0.15..0.55).contains(&y) && (0.1..0.45).contains(&x) {
                img.set(k, l, 0.8);
            }
            if (0.6..0.9).contains(&y) && (0.55..0.9).contains(&x) {
                img.set(k, l, 0.5);
            }
            let (dy, dx) = (y - 0.35, x - 0.7);
            if dy * dy + dx * dx < 0.02 {
                img.set(k, l, 0.65);
            }
        }
    }
    img
}

/// Smooth positive phantom (sum of Gaussian bumps on a positive floor),
/// resembling a microscopy intensity map. Suitable for Poisson + Gaussian
/// experiments where strictly positive intensities are needed.
pub fn blobs(size: usize) -> ImageGrid {
    let mut img = ImageGrid::constant(size, size, 0.08).expect("size >= 2");
    let bumps = [
        (0.3, 0.3, 0.12, 0.7),
        (0.7, 0.6, 0.18, 0.55),
        (0.45, 0.75, 0.08, 0.8),
    ];
    let s = size as f64;
    for k in 0..size {
        for l in 0..size {
            let (y, x) = (k as f64 / s, l as f64 / s);
            let mut v: f64 = img.at(k, l);
            for &(cy, cx, w, a) in &bumps {
                let d2 = (y - cy) * (y - cy) + (x - cx) * (x - cx);
                v += a * (-d2 / (2.0 * w * w)).exp();
            }
            img.set(k, l, v.min(1.0));
        }
    }
    img
}
