//! Image lattice container and discrete differential operators.
//!
//! Forward differences for the gradient and the matching backward-difference
//! divergence, so that `inner(grad_forward(u), q) == -inner(u, div_backward(q))`
//! holds exactly (up to rounding) for every pair `(u, q)`. Neumann boundary:
//! differences across the last row/column are zero and the divergence ignores
//! the corresponding dead entries of the dual field. Unit grid spacing.

use crate::error::{Error, Result};

/// N×M real-valued pixel lattice, row-major. Intensities are nominally in
/// [0,1] but values outside that range are allowed during iteration.
#[derive(Debug, Clone, PartialEq)]
pub struct ImageGrid {
    width: usize,
    height: usize,
    data: Vec<f64>,
}

/// Per-pixel vector field: 2 channels for the TV dual `q`, 1 channel for the
/// sparse dual `p`. Channel-major storage (all of channel 0, then channel 1).
#[derive(Debug, Clone, PartialEq)]
pub struct DualField {
    width: usize,
    height: usize,
    channels: usize,
    data: Vec<f64>,
}

impl ImageGrid {
    pub fn zeros(width: usize, height: usize) -> Result<Self> {
        if width < 2 || height < 2 {
            return Err(Error::InvalidParam(format!(
                "grid must be at least 2x2, got {width}x{height}"
            )));
        }
        Ok(Self {
            width,
            height,
            data: vec![0.0; width * height],
        })
    }

    pub fn from_vec(width: usize, height: usize, data: Vec<f64>) -> Result<Self> {
        if width < 2 || height < 2 {
            return Err(Error::InvalidParam(format!(
                "grid must be at least 2x2, got {width}x{height}"
            )));
        }
        if data.len() != width * height {
            return Err(Error::InvalidParam(format!(
                "data length {} does not match {width}x{height}",
                data.len()
            )));
        }
        Ok(Self {
            width,
            height,
            data,
        })
    }

    pub fn constant(width: usize, height: usize, value: f64) -> Result<Self> {
        let mut g = Self::zeros(width, height)?;
        g.data.fill(value);
        Ok(g)
    }

    pub fn width(&self) -> usize {
        self.width
    }

    pub fn height(&self) -> usize {
        self.height
    }

    pub fn len(&self) -> usize {
        self.data.len()
    }

    pub fn is_empty(&self) -> bool {
        false // invariant: at least 2x2
    }

    pub fn data(&self) -> &[f64] {
        &self.data
    }

    pub fn data_mut(&mut self) -> &mut [f64] {
        &mut self.data
    }

    pub fn into_vec(self) -> Vec<f64> {
        self.data
    }

    #[inline]
    pub fn at(&self, row: usize, col: usize) -> f64 {
        self.data[row * self.width + col]
    }

    #[inline]
    pub fn set(&mut self, row: usize, col: usize, value: f64) {
        self.data[row * self.width + col] = value;
    }

    pub fn same_shape(&self, other: &ImageGrid) -> bool {
        self.width == other.width && self.height == other.height
    }

    /// New grid of the same shape filled with `f(self[i], other[i])`.
    pub fn zip_map(&self, other: &ImageGrid, f: impl Fn(f64, f64) -> f64) -> Result<ImageGrid> {
        if !self.same_shape(other) {
            return Err(Error::ShapeMismatch(
                self.width,
                self.height,
                other.width,
                other.height,
            ));
        }
        let data = self
            .data
            .iter()
            .zip(&other.data)
            .map(|(&a, &b)| f(a, b))
            .collect();
        Ok(ImageGrid {
            width: self.width,
            height: self.height,
            data,
        })
    }

    pub fn map(&self, f: impl Fn(f64) -> f64) -> ImageGrid {
        ImageGrid {
            width: self.width,
            height: self.height,
            data: self.data.iter().map(|&a| f(a)).collect(),
        }
    }

    pub fn sub(&self, other: &ImageGrid) -> Result<ImageGrid> {
        self.zip_map(other, |a, b| a - b)
    }

    pub fn add(&self, other: &ImageGrid) -> Result<ImageGrid> {
        self.zip_map(other, |a, b| a + b)
    }

    pub fn max_abs(&self) -> f64 {
        self.data.iter().fold(0.0_f64, |m, &x| m.max(x.abs()))
    }
}

impl DualField {
    pub fn zeros(width: usize, height: usize, channels: usize) -> Result<Self> {
        if channels != 1 && channels != 2 {
            return Err(Error::ChannelMismatch {
                expected: 2,
                got: channels,
            });
        }
        if width < 2 || height < 2 {
            return Err(Error::InvalidParam(format!(
                "field must be at least 2x2, got {width}x{height}"
            )));
        }
        Ok(Self {
            width,
            height,
            channels,
            data: vec![0.0; width * height * channels],
        })
    }

    pub fn width(&self) -> usize {
        self.width
    }

    pub fn height(&self) -> usize {
        self.height
    }

    pub fn channels(&self) -> usize {
        self.channels
    }

    pub fn data(&self) -> &[f64] {
        &self.data
    }

    pub fn data_mut(&mut self) -> &mut [f64] {
        &mut self.data
    }

    /// Channel `c` as a contiguous slice of `width*height` samples.
    pub fn channel(&self, c: usize) -> &[f64] {
        let n = self.width * self.height;
        &self.data[c * n..(c + 1) * n]
    }

    pub fn channel_mut(&mut self, c: usize) -> &mut [f64] {
        let n = self.width * self.height;
        &mut self.data[c * n..(c + 1) * n]
    }

    #[inline]
    pub fn at(&self, c: usize, row: usize, col: usize) -> f64 {
        self.data[c * self.width * self.height + row * self.width + col]
    }

    #[inline]
    pub fn set(&mut self, c: usize, row: usize, col: usize, value: f64) {
        self.data[c * self.width * self.height + row * self.width + col] = value;
    }

    /// Largest per-pixel Euclidean magnitude over all pixels.
    pub fn max_magnitude(&self) -> f64 {
        let n = self.width * self.height;
        let mut m = 0.0_f64;
        for i in 0..n {
            let mut s = 0.0;
            for c in 0..self.channels {
                let x = self.data[c * n + i];
                s += x * x;
            }
            m = m.max(s.sqrt());
        }
        m
    }
}

/// Common view over grids and dual fields for the plain inner products and
/// norms below.
pub trait SampleField {
    fn shape(&self) -> (usize, usize, usize);
    fn samples(&self) -> &[f64];
}

impl SampleField for ImageGrid {
    fn shape(&self) -> (usize, usize, usize) {
        (self.width, self.height, 1)
    }
    fn samples(&self) -> &[f64] {
        &self.data
    }
}

impl SampleField for DualField {
    fn shape(&self) -> (usize, usize, usize) {
        (self.width, self.height, self.channels)
    }
    fn samples(&self) -> &[f64] {
        &self.data
    }
}

/// Forward-difference gradient with Neumann boundary. Channel 0 holds the
/// row-direction differences `u[k+1,l] - u[k,l]`, channel 1 the
/// column-direction differences `u[k,l+1] - u[k,l]`.
pub fn grad_forward(u: &ImageGrid) -> DualField {
    let (w, h) = (u.width, u.height);
    let mut q = DualField::zeros(w, h, 2).expect("grid invariant guarantees valid shape");
    let n = w * h;
    for k in 0..h {
        for l in 0..w {
            let i = k * w + l;
            if k + 1 < h {
                q.data[i] = u.data[i + w] - u.data[i];
            }
            if l + 1 < w {
                q.data[n + i] = u.data[i + 1] - u.data[i];
            }
        }
    }
    q
}

/// Backward-difference divergence, the negative adjoint of [`grad_forward`]:
/// `inner(grad_forward(u), q) == -inner(u, div_backward(q))` for all `u`, `q`.
pub fn div_backward(q: &DualField) -> Result<ImageGrid> {
    if q.channels != 2 {
        return Err(Error::ChannelMismatch {
            expected: 2,
            got: q.channels,
        });
    }
    let (w, h) = (q.width, q.height);
    let n = w * h;
    let mut out = ImageGrid::zeros(w, h)?;
    for k in 0..h {
        for l in 0..w {
            let i = k * w + l;
            let mut d = 0.0;
            if k + 1 < h {
                d += q.data[i];
            }
            if k > 0 {
                d -= q.data[i - w];
            }
            if l + 1 < w {
                d += q.data[n + i];
            }
            if l > 0 {
                d -= q.data[n + i - 1];
            }
            out.data[i] = d;
        }
    }
    Ok(out)
}

fn check_shapes<T: SampleField>(a: &T, b: &T) -> Result<()> {
    let (aw, ah, ac) = a.shape();
    let (bw, bh, bc) = b.shape();
    if aw != bw || ah != bh {
        return Err(Error::ShapeMismatch(aw, ah, bw, bh));
    }
    if ac != bc {
        return Err(Error::ChannelMismatch { expected: ac, got: bc });
    }
    Ok(())
}

/// Plain sum-of-products inner product over all samples.
pub fn inner<T: SampleField>(a: &T, b: &T) -> Result<f64> {
    check_shapes(a, b)?;
    Ok(a.samples()
        .iter()
        .zip(b.samples())
        .map(|(&x, &y)| x * y)
        .sum())
}

/// Unweighted sum of absolute sample values.
pub fn norm_l1<T: SampleField>(a: &T) -> f64 {
    a.samples().iter().map(|x| x.abs()).sum()
}

/// Unweighted sum of squared sample values.
pub fn norm_l2_sq<T: SampleField>(a: &T) -> f64 {
    a.samples().iter().map(|x| x * x).sum()
}

pub fn norm_l2<T: SampleField>(a: &T) -> f64 {
    norm_l2_sq(a).sqrt()
}
