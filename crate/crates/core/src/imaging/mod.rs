//! Image planes, kernels and the circular linear operators used by the
//! reconstruction solver.
//!
//! Every operator that appears inside the solver uses a periodic boundary so
//! that forward/adjoint pairs are exact transposes of each other. Only the
//! bicubic resampler, which is a display/initialization path, replicates
//! edges instead.

mod color;
pub mod io;
mod ops;
mod resample;

pub use color::{rgb_to_ycbcr, ycbcr_to_rgb};
pub use ops::{
    convolve_circular, correlate_circular, decimate, gradient_adjoint, gradient_forward,
    shift_subpixel, shift_subpixel_adjoint, upsample_zero,
};
pub use resample::{cubic_weight, resample_bicubic, resize_bicubic};

use crate::error::{param, Error, Result};

/// Row-major 2D intensity grid, nominally in `[0, 1]`.
#[derive(Debug, Clone, PartialEq)]
pub struct ImagePlane {
    height: usize,
    width: usize,
    data: Vec<f64>,
}

impl ImagePlane {
    pub fn new(height: usize, width: usize, data: Vec<f64>) -> Result<Self> {
        if height == 0 || width == 0 {
            return param(format!("image dimensions must be positive, got {height}x{width}"));
        }
        if data.len() != height * width {
            return param(format!(
                "data length {} does not match {height}x{width}",
                data.len()
            ));
        }
        Ok(Self { height, width, data })
    }

    pub fn zeros(height: usize, width: usize) -> Self {
        Self::filled(height, width, 0.0)
    }

    pub fn filled(height: usize, width: usize, value: f64) -> Self {
        assert!(height > 0 && width > 0, "image dimensions must be positive");
        Self { height, width, data: vec![value; height * width] }
    }

    pub fn from_fn(height: usize, width: usize, mut f: impl FnMut(usize, usize) -> f64) -> Self {
        assert!(height > 0 && width > 0, "image dimensions must be positive");
        let mut data = Vec::with_capacity(height * width);
        for y in 0..height {
            for x in 0..width {
                data.push(f(y, x));
            }
        }
        Self { height, width, data }
    }

    #[inline]
    pub fn height(&self) -> usize {
        self.height
    }

    #[inline]
    pub fn width(&self) -> usize {
        self.width
    }

    #[inline]
    pub fn dims(&self) -> (usize, usize) {
        (self.height, self.width)
    }

    #[inline]
    pub fn len(&self) -> usize {
        self.data.len()
    }

    #[inline]
    pub fn is_empty(&self) -> bool {
        self.data.is_empty()
    }

    #[inline]
    pub fn data(&self) -> &[f64] {
        &self.data
    }

    #[inline]
    pub fn data_mut(&mut self) -> &mut [f64] {
        &mut self.data
    }

    pub fn into_data(self) -> Vec<f64> {
        self.data
    }

    #[inline]
    pub fn get(&self, y: usize, x: usize) -> f64 {
        self.data[y * self.width + x]
    }

    #[inline]
    pub fn set(&mut self, y: usize, x: usize, v: f64) {
        self.data[y * self.width + x] = v;
    }

    /// Value at `(y, x)` with periodic wrap-around.
    #[inline]
    pub fn get_wrapped(&self, y: isize, x: isize) -> f64 {
        let yy = y.rem_euclid(self.height as isize) as usize;
        let xx = x.rem_euclid(self.width as isize) as usize;
        self.data[yy * self.width + xx]
    }

    pub fn same_dims(&self, other: &ImagePlane) -> bool {
        self.dims() == other.dims()
    }

    pub(crate) fn check_same_dims(&self, other: &ImagePlane, what: &str) -> Result<()> {
        if self.same_dims(other) {
            Ok(())
        } else {
            param(format!(
                "{what}: dimension mismatch {}x{} vs {}x{}",
                self.height, self.width, other.height, other.width
            ))
        }
    }

    pub fn is_finite(&self) -> bool {
        self.data.iter().all(|v| v.is_finite())
    }

    pub(crate) fn ensure_finite(&self, what: &str) -> Result<()> {
        if self.is_finite() {
            Ok(())
        } else {
            Err(Error::Numeric(format!("{what} contains NaN or infinity")))
        }
    }

    pub fn dot(&self, other: &ImagePlane) -> f64 {
        debug_assert!(self.same_dims(other));
        self.data.iter().zip(&other.data).map(|(a, b)| a * b).sum()
    }

    pub fn norm_sq(&self) -> f64 {
        self.data.iter().map(|v| v * v).sum()
    }

    pub fn map(&self, f: impl Fn(f64) -> f64) -> ImagePlane {
        ImagePlane {
            height: self.height,
            width: self.width,
            data: self.data.iter().map(|&v| f(v)).collect(),
        }
    }

    pub fn zip_map(&self, other: &ImagePlane, f: impl Fn(f64, f64) -> f64) -> ImagePlane {
        debug_assert!(self.same_dims(other));
        ImagePlane {
            height: self.height,
            width: self.width,
            data: self.data.iter().zip(&other.data).map(|(&a, &b)| f(a, b)).collect(),
        }
    }

    /// `self += alpha * other`
    pub fn axpy(&mut self, alpha: f64, other: &ImagePlane) {
        debug_assert!(self.same_dims(other));
        for (a, b) in self.data.iter_mut().zip(&other.data) {
            *a += alpha * b;
        }
    }

    pub fn scale_in_place(&mut self, alpha: f64) {
        self.data.iter_mut().for_each(|v| *v *= alpha);
    }

    pub fn clipped(&self, lo: f64, hi: f64) -> ImagePlane {
        self.map(|v| v.clamp(lo, hi))
    }

    pub fn mean(&self) -> f64 {
        self.data.iter().sum::<f64>() / self.data.len() as f64
    }

    /// Extracts the `h`x`w` window whose top-left corner is `(y0, x0)`.
    pub fn crop(&self, y0: usize, x0: usize, h: usize, w: usize) -> Result<ImagePlane> {
        if h == 0 || w == 0 || y0 + h > self.height || x0 + w > self.width {
            return param(format!(
                "crop {h}x{w} at ({y0},{x0}) exceeds {}x{}",
                self.height, self.width
            ));
        }
        Ok(ImagePlane::from_fn(h, w, |y, x| self.get(y0 + y, x0 + x)))
    }
}

/// Square convolution kernel of side `2·radius + 1`.
///
/// Kernels built by [`Kernel2D::gaussian`] also remember their 1D factor so
/// convolution can run as two separable passes.
#[derive(Debug, Clone, PartialEq)]
pub struct Kernel2D {
    radius: usize,
    weights: Vec<f64>,
    separable: Option<Vec<f64>>,
}

impl Kernel2D {
    /// Arbitrary kernel; `weights` is row-major with side `2·radius + 1`.
    pub fn from_weights(radius: usize, weights: Vec<f64>) -> Result<Self> {
        let side = 2 * radius + 1;
        if weights.len() != side * side {
            return param(format!(
                "kernel of radius {radius} needs {} weights, got {}",
                side * side,
                weights.len()
            ));
        }
        if weights.iter().any(|w| !w.is_finite()) {
            return Err(Error::Numeric("kernel weights".into()));
        }
        Ok(Self { radius, weights, separable: None })
    }

    /// Unit impulse: the identity blur.
    pub fn delta() -> Self {
        Self { radius: 0, weights: vec![1.0], separable: Some(vec![1.0]) }
    }

    /// Sampled isotropic Gaussian normalized to unit sum.
    pub fn gaussian(sigma: f64, radius: usize) -> Result<Self> {
        if !(sigma > 0.0) || !sigma.is_finite() {
            return param(format!("gaussian sigma must be positive, got {sigma}"));
        }
        if radius < 1 {
            return param("gaussian radius must be at least 1");
        }
        let r = radius as isize;
        let mut factor: Vec<f64> =
            (-r..=r).map(|i| (-((i * i) as f64) / (2.0 * sigma * sigma)).exp()).collect();
        let s: f64 = factor.iter().sum();
        factor.iter_mut().for_each(|v| *v /= s);

        let side = 2 * radius + 1;
        let mut weights = vec![0.0; side * side];
        for i in 0..side {
            for j in 0..side {
                weights[i * side + j] = factor[i] * factor[j];
            }
        }
        // The outer product of a unit-sum factor sums to one up to rounding;
        // renormalize so the 2D weights are exactly what the dense path uses.
        let total: f64 = weights.iter().sum();
        weights.iter_mut().for_each(|v| *v /= total);
        Ok(Self { radius, weights, separable: Some(factor) })
    }

    /// Rescales the kernel so its weights sum to one.
    pub fn normalized(mut self) -> Result<Self> {
        let total: f64 = self.weights.iter().sum();
        if total.abs() < f64::MIN_POSITIVE {
            return param("cannot normalize a kernel with zero sum");
        }
        self.weights.iter_mut().for_each(|v| *v /= total);
        if let Some(f) = self.separable.as_mut() {
            let t: f64 = f.iter().sum();
            f.iter_mut().for_each(|v| *v /= t);
        }
        Ok(self)
    }

    #[inline]
    pub fn radius(&self) -> usize {
        self.radius
    }

    #[inline]
    pub fn side(&self) -> usize {
        2 * self.radius + 1
    }

    #[inline]
    pub fn weights(&self) -> &[f64] {
        &self.weights
    }

    pub fn separable_factor(&self) -> Option<&[f64]> {
        self.separable.as_deref()
    }

    /// Weight at offset `(dy, dx)` from the center.
    #[inline]
    pub fn at(&self, dy: isize, dx: isize) -> f64 {
        let r = self.radius as isize;
        self.weights[((dy + r) as usize) * self.side() + (dx + r) as usize]
    }

    pub fn sum(&self) -> f64 {
        self.weights.iter().sum()
    }
}

/// Horizontal and vertical circular forward differences of an image.
#[derive(Debug, Clone, PartialEq)]
pub struct GradientPair {
    pub gx: ImagePlane,
    pub gy: ImagePlane,
}

impl GradientPair {
    pub fn new(gx: ImagePlane, gy: ImagePlane) -> Result<Self> {
        gx.check_same_dims(&gy, "gradient pair")?;
        Ok(Self { gx, gy })
    }

    pub fn zeros(height: usize, width: usize) -> Self {
        Self { gx: ImagePlane::zeros(height, width), gy: ImagePlane::zeros(height, width) }
    }

    pub fn dims(&self) -> (usize, usize) {
        self.gx.dims()
    }

    pub fn dot(&self, other: &GradientPair) -> f64 {
        self.gx.dot(&other.gx) + self.gy.dot(&other.gy)
    }

    pub fn norm_sq(&self) -> f64 {
        self.gx.norm_sq() + self.gy.norm_sq()
    }

    pub fn axpy(&mut self, alpha: f64, other: &GradientPair) {
        self.gx.axpy(alpha, &other.gx);
        self.gy.axpy(alpha, &other.gy);
    }
}
