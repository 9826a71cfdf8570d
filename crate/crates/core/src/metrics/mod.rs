//! Full-reference quality metrics and benchmark reports.

mod benchmark;
mod report;

pub use benchmark::{aligned_bicubic, benchmark, BenchmarkSuite, Method, TestImage};
pub use report::{MetricsReport, MetricsRow, CSV_HEADER};

use crate::error::{param, Result};
use crate::imaging::{ImagePlane, Kernel2D};

pub const SSIM_WINDOW_RADIUS: usize = 5;
pub const SSIM_SIGMA: f64 = 1.5;
pub const SSIM_K1: f64 = 0.01;
pub const SSIM_K2: f64 = 0.03;

/// Mean squared error between two equally sized images.
pub fn mse(reference: &ImagePlane, test: &ImagePlane) -> Result<f64> {
    reference.check_same_dims(test, "mse")?;
    let sum: f64 = reference.data().iter().zip(test.data()).map(|(a, b)| (a - b) * (a - b)).sum();
    Ok(sum / reference.len() as f64)
}

/// Peak signal-to-noise ratio in dB; `+∞` for identical images.
pub fn psnr(reference: &ImagePlane, test: &ImagePlane, peak: f64) -> Result<f64> {
    if !(peak > 0.0) {
        return param(format!("psnr peak must be positive, got {peak}"));
    }
    let e = mse(reference, test)?;
    if e == 0.0 {
        return Ok(f64::INFINITY);
    }
    Ok(10.0 * (peak * peak / e).log10())
}

/// Filters `img` with the separable `factor` over windows lying entirely
/// inside the image. Output is `(h - side + 1) x (w - side + 1)`.
fn valid_filter(data: &[f64], h: usize, w: usize, factor: &[f64]) -> Vec<f64> {
    let side = factor.len();
    let (oh, ow) = (h - side + 1, w - side + 1);
    let mut tmp = vec![0.0; h * ow];
    for y in 0..h {
        let row = &data[y * w..(y + 1) * w];
        for x in 0..ow {
            tmp[y * ow + x] = factor.iter().zip(&row[x..x + side]).map(|(f, v)| f * v).sum();
        }
    }
    let mut out = vec![0.0; oh * ow];
    for y in 0..oh {
        for (i, f) in factor.iter().enumerate() {
            let src = &tmp[(y + i) * ow..(y + i + 1) * ow];
            for (o, v) in out[y * ow..(y + 1) * ow].iter_mut().zip(src) {
                *o += f * v;
            }
        }
    }
    out
}

/// Mean structural similarity with an 11x11 Gaussian window (σ = 1.5),
/// `K1 = 0.01`, `K2 = 0.03` and dynamic range 1, averaged over every window
/// that fits inside the image.
pub fn ssim(reference: &ImagePlane, test: &ImagePlane) -> Result<f64> {
    reference.check_same_dims(test, "ssim")?;
    let (h, w) = reference.dims();
    let side = 2 * SSIM_WINDOW_RADIUS + 1;
    if h < side || w < side {
        return param(format!("ssim needs at least {side}x{side} pixels, got {h}x{w}"));
    }
    let kernel = Kernel2D::gaussian(SSIM_SIGMA, SSIM_WINDOW_RADIUS)?;
    let factor = kernel.separable_factor().expect("gaussian kernels are separable");
    let x = reference.data();
    let y = test.data();
    let xx: Vec<f64> = x.iter().map(|v| v * v).collect();
    let yy: Vec<f64> = y.iter().map(|v| v * v).collect();
    let xy: Vec<f64> = x.iter().zip(y).map(|(a, b)| a * b).collect();
    let mx = valid_filter(x, h, w, factor);
    let my = valid_filter(y, h, w, factor);
    let sxx = valid_filter(&xx, h, w, factor);
    let syy = valid_filter(&yy, h, w, factor);
    let sxy = valid_filter(&xy, h, w, factor);
    let c1 = SSIM_K1 * SSIM_K1;
    let c2 = SSIM_K2 * SSIM_K2;
    let total: f64 = (0..mx.len())
        .map(|i| {
            let (ux, uy) = (mx[i], my[i]);
            let vx = sxx[i] - ux * ux;
            let vy = syy[i] - uy * uy;
            let cov = sxy[i] - ux * uy;
            ((2.0 * ux * uy + c1) * (2.0 * cov + c2)) / ((ux * ux + uy * uy + c1) * (vx + vy + c2))
        })
        .sum();
    Ok(total / mx.len() as f64)
}
