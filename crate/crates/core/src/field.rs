//! Periodic sample grids and the FFT plumbing used by the spectral paths.

use std::sync::Arc;

use num_complex::Complex64;
use rustfft::{Fft, FftPlanner};

use crate::error::{Error, Result};

/// Samples on a uniform periodic grid with isotropic spacing.
///
/// Node `i` along each axis sits at `origin + i * spacing`; the periodic box has side `shape[k] * spacing`.
/// Data is stored row-major (last axis fastest).
#[derive(Clone, Debug, PartialEq)]
pub struct ScalarField {
    pub shape: Vec<usize>,
    pub spacing: f64,
    pub origin: Vec<f64>,
    pub data: Vec<f64>,
}

impl ScalarField {
    pub fn zeros(shape: &[usize], spacing: f64, origin: &[f64]) -> Self {
        assert_eq!(shape.len(), origin.len());
        let len = shape.iter().product();
        Self { shape: shape.to_vec(), spacing, origin: origin.to_vec(), data: vec![0.0; len] }
    }

    /// A square 2D grid of side `box_len` with `n` nodes per axis, origin at the corner.
    pub fn square(n: usize, box_len: f64) -> Self {
        Self::zeros(&[n, n], box_len / n as f64, &[0.0, 0.0])
    }

    pub fn from_fn2(n: usize, box_len: f64, f: impl Fn(f64, f64) -> f64) -> Self {
        let mut out = Self::square(n, box_len);
        let h = out.spacing;
        for i in 0..n {
            for j in 0..n {
                out.data[i * n + j] = f(i as f64 * h, j as f64 * h);
            }
        }
        out
    }

    pub fn with_data(&self, data: Vec<f64>) -> Self {
        assert_eq!(data.len(), self.data.len());
        Self { shape: self.shape.clone(), spacing: self.spacing, origin: self.origin.clone(), data }
    }

    pub fn map(&self, f: impl Fn(f64) -> f64) -> Self {
        self.with_data(self.data.iter().map(|&v| f(v)).collect())
    }

    pub fn dim(&self) -> usize {
        self.shape.len()
    }

    pub fn len(&self) -> usize {
        self.data.len()
    }

    pub fn is_empty(&self) -> bool {
        self.data.is_empty()
    }

    pub fn box_size(&self) -> Vec<f64> {
        self.shape.iter().map(|&n| n as f64 * self.spacing).collect()
    }

    pub fn n2(&self) -> (usize, usize) {
        assert_eq!(self.shape.len(), 2, "expected a 2D field");
        (self.shape[0], self.shape[1])
    }

    #[inline]
    pub fn at2(&self, i: usize, j: usize) -> f64 {
        self.data[i * self.shape[1] + j]
    }

    /// Periodic access with signed indices.
    #[inline]
    pub fn wrap2(&self, i: isize, j: isize) -> f64 {
        let (n0, n1) = (self.shape[0] as isize, self.shape[1] as isize);
        let ii = i.rem_euclid(n0) as usize;
        let jj = j.rem_euclid(n1) as usize;
        self.data[ii * self.shape[1] + jj]
    }

    pub fn coord2(&self, i: usize, j: usize) -> [f64; 2] {
        [self.origin[0] + i as f64 * self.spacing, self.origin[1] + j as f64 * self.spacing]
    }

    pub fn check_same_grid(&self, other: &ScalarField) -> Result<()> {
        if self.shape != other.shape || self.spacing != other.spacing || self.origin != other.origin {
            return Err(Error::Shape(format!(
                "grids differ: {:?}/{} vs {:?}/{}",
                self.shape, self.spacing, other.shape, other.spacing
            )));
        }
        Ok(())
    }

    pub fn max_abs(&self) -> f64 {
        self.data.iter().fold(0.0, |m, v| m.max(v.abs()))
    }

    pub fn min_max(&self) -> (f64, f64) {
        self.data
            .iter()
            .fold((f64::INFINITY, f64::NEG_INFINITY), |(lo, hi), &v| (lo.min(v), hi.max(v)))
    }

    /// Centered-difference gradient in 2D (periodic).
    pub fn gradient2(&self, i: usize, j: usize) -> [f64; 2] {
        let (i, j) = (i as isize, j as isize);
        let h2 = 2.0 * self.spacing;
        [
            (self.wrap2(i + 1, j) - self.wrap2(i - 1, j)) / h2,
            (self.wrap2(i, j + 1) - self.wrap2(i, j - 1)) / h2,
        ]
    }

    /// Centered-difference Hessian in 2D (periodic): [dxx, dxy, dyy].
    pub fn hessian2(&self, i: usize, j: usize) -> [f64; 3] {
        let (i, j) = (i as isize, j as isize);
        let h = self.spacing;
        let c = self.wrap2(i, j);
        let dxx = (self.wrap2(i + 1, j) - 2.0 * c + self.wrap2(i - 1, j)) / (h * h);
        let dyy = (self.wrap2(i, j + 1) - 2.0 * c + self.wrap2(i, j - 1)) / (h * h);
        let dxy = (self.wrap2(i + 1, j + 1) - self.wrap2(i + 1, j - 1) - self.wrap2(i - 1, j + 1)
            + self.wrap2(i - 1, j - 1))
            / (4.0 * h * h);
        [dxx, dxy, dyy]
    }

    pub fn laplacian2(&self, i: usize, j: usize) -> f64 {
        let hs = self.hessian2(i, j);
        hs[0] + hs[2]
    }

    /// Integer-cell periodic shift: out(i, j) = self(i - di, j - dj).
    pub fn shifted2(&self, di: isize, dj: isize) -> Self {
        let (n0, n1) = self.n2();
        let mut out = self.clone();
        for i in 0..n0 {
            for j in 0..n1 {
                out.data[i * n1 + j] = self.wrap2(i as isize - di, j as isize - dj);
            }
        }
        out
    }
}

/// Cached forward/inverse plans for 1D and 2D complex transforms.
pub struct Fft2 {
    n0: usize,
    n1: usize,
    f0: Arc<dyn Fft<f64>>,
    f1: Arc<dyn Fft<f64>>,
    i0: Arc<dyn Fft<f64>>,
    i1: Arc<dyn Fft<f64>>,
}

impl Fft2 {
    pub fn new(n0: usize, n1: usize) -> Self {
        let mut planner = FftPlanner::new();
        Self {
            n0,
            n1,
            f0: planner.plan_fft_forward(n0),
            f1: planner.plan_fft_forward(n1),
            i0: planner.plan_fft_inverse(n0),
            i1: planner.plan_fft_inverse(n1),
        }
    }

    pub fn shape(&self) -> (usize, usize) {
        (self.n0, self.n1)
    }

    fn apply(&self, buf: &mut [Complex64], row: &Arc<dyn Fft<f64>>, col: &Arc<dyn Fft<f64>>) {
        let (n0, n1) = (self.n0, self.n1);
        assert_eq!(buf.len(), n0 * n1);
        for r in buf.chunks_exact_mut(n1) {
            row.process(r);
        }
        let mut column = vec![Complex64::new(0.0, 0.0); n0];
        for j in 0..n1 {
            for i in 0..n0 {
                column[i] = buf[i * n1 + j];
            }
            col.process(&mut column);
            for i in 0..n0 {
                buf[i * n1 + j] = column[i];
            }
        }
    }

    pub fn forward(&self, buf: &mut [Complex64]) {
        self.apply(buf, &self.f1, &self.f0);
    }

    /// Inverse transform including the 1/(n0 n1) normalization.
    pub fn inverse(&self, buf: &mut [Complex64]) {
        self.apply(buf, &self.i1, &self.i0);
        let scale = 1.0 / (self.n0 * self.n1) as f64;
        for v in buf.iter_mut() {
            *v *= scale;
        }
    }

    pub fn forward_real(&self, data: &[f64]) -> Vec<Complex64> {
        let mut buf: Vec<Complex64> = data.iter().map(|&v| Complex64::new(v, 0.0)).collect();
        self.forward(&mut buf);
        buf
    }

    /// Circular convolution out(x) = Σ_y a(y) k(x - y) of two real arrays of this shape.
    pub fn convolve(&self, a: &[f64], k_hat: &[Complex64]) -> Vec<f64> {
        let mut buf = self.forward_real(a);
        for (b, k) in buf.iter_mut().zip(k_hat) {
            *b *= k;
        }
        self.inverse(&mut buf);
        buf.iter().map(|c| c.re).collect()
    }
}

/// Signed integer wavenumber index for an FFT bin.
#[inline]
pub fn freq_index(k: usize, n: usize) -> isize {
    if k <= n / 2 {
        k as isize
    } else {
        k as isize - n as isize
    }
}
