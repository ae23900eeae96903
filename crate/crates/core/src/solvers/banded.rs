//! Symmetric banded LDL^T factorisation for the reduced Newton systems.
//!
//! The reduced systems couple each pixel with its grid neighbours, so with
//! interleaved `(du, dv)` unknowns the half-bandwidth is twice the image
//! width. Storage is lower-band, column-major: `col[j*(m+1) + r] = A[j+r][j]`.

/// Symmetric positive (semi)definite banded matrix with half-bandwidth `m`.
pub(crate) struct BandedSpd {
    n: usize,
    m: usize,
    col: Vec<f64>,
    factored: bool,
    /// Number of pivots clamped at the floor during factorisation.
    pub floored_pivots: usize,
}

impl BandedSpd {
    pub fn new(n: usize, m: usize) -> Self {
        Self {
            n,
            m,
            col: vec![0.0; n * (m + 1)],
            factored: false,
            floored_pivots: 0,
        }
    }

    /// Adds `val` to the symmetric entry `(a, b)`; `|a - b|` must be within
    /// the band.
    #[inline]
    pub fn add(&mut self, a: usize, b: usize, val: f64) {
        let (hi, lo) = if a >= b { (a, b) } else { (b, a) };
        debug_assert!(hi - lo <= self.m, "entry outside band");
        self.col[lo * (self.m + 1) + (hi - lo)] += val;
    }

    /// In-place LDL^T. Pivots below `floor * max_diag` are clamped so that
    /// semidefinite systems still factor; the count is recorded.
    pub fn factor(&mut self) {
        assert!(!self.factored);
        let (n, m) = (self.n, self.m);
        let w = m + 1;
        let max_diag = (0..n)
            .map(|j| self.col[j * w])
            .fold(f64::MIN_POSITIVE, f64::max);
        let floor = 1e-14 * max_diag;
        for j in 0..n {
            let start = j.saturating_sub(m);
            for k in start..j {
                let r = j - k;
                let ljk = self.col[k * w + r];
                if ljk == 0.0 {
                    continue;
                }
                let djk = ljk * self.col[k * w];
                let len = (k + m).min(n - 1) - j;
                let (head, tail) = self.col.split_at_mut(j * w);
                let src = &head[k * w + r..k * w + r + len + 1];
                let dst = &mut tail[..len + 1];
                for t in 0..=len {
                    dst[t] -= src[t] * djk;
                }
            }
            let mut d = self.col[j * w];
            if d < floor {
                d = floor;
                self.floored_pivots += 1;
            }
            self.col[j * w] = d;
            let inv = 1.0 / d;
            for r in 1..=m.min(n - 1 - j) {
                self.col[j * w + r] *= inv;
            }
        }
        self.factored = true;
    }

    /// Solves `A x = b` in place using the factorisation.
    pub fn solve(&self, x: &mut [f64]) {
        assert!(self.factored);
        let (n, m) = (self.n, self.m);
        let w = m + 1;
        // Forward substitution L z = b.
        for j in 0..n {
            let zj = x[j];
            if zj != 0.0 {
                let len = m.min(n - 1 - j);
                for r in 1..=len {
                    x[j + r] -= self.col[j * w + r] * zj;
                }
            }
        }
        // Diagonal.
        for j in 0..n {
            x[j] /= self.col[j * w];
        }
        // Backward substitution L^T y = z.
        for j in (0..n).rev() {
            let len = m.min(n - 1 - j);
            let mut acc = 0.0;
            for r in 1..=len {
                acc += self.col[j * w + r] * x[j + r];
            }
            x[j] -= acc;
        }
    }
}
