use super::{GradientPair, ImagePlane, Kernel2D};
use crate::error::{param, Result};

fn check_kernel_fits(img: &ImagePlane, k: &Kernel2D) -> Result<()> {
    let side = k.side();
    if side > img.height() || side > img.width() {
        return param(format!(
            "kernel of side {side} does not fit in {}x{} image",
            img.height(),
            img.width()
        ));
    }
    Ok(())
}

/// Wrapped source index for every output index at a fixed offset.
fn wrapped_indices(len: usize, offset: isize) -> Vec<usize> {
    (0..len as isize).map(|i| (i + offset).rem_euclid(len as isize) as usize).collect()
}

/// `out(y, x) = Σ k(i, j) · img(y + sign·i, x + sign·j)`.
///
/// `sign = -1` is convolution, `sign = +1` correlation.
fn filter_dense(img: &ImagePlane, k: &Kernel2D, sign: isize) -> ImagePlane {
    let (h, w) = img.dims();
    let r = k.radius() as isize;
    let src = img.data();
    let mut out = vec![0.0; h * w];
    for dy in -r..=r {
        let rows = wrapped_indices(h, sign * dy);
        for dx in -r..=r {
            let wgt = k.at(dy, dx);
            if wgt == 0.0 {
                continue;
            }
            let cols = wrapped_indices(w, sign * dx);
            for y in 0..h {
                let srow = &src[rows[y] * w..rows[y] * w + w];
                let orow = &mut out[y * w..y * w + w];
                for (o, &c) in orow.iter_mut().zip(&cols) {
                    *o += wgt * srow[c];
                }
            }
        }
    }
    ImagePlane { height: h, width: w, data: out }
}

fn filter_separable(img: &ImagePlane, factor: &[f64], sign: isize) -> ImagePlane {
    let (h, w) = img.dims();
    let r = (factor.len() / 2) as isize;
    let src = img.data();

    let mut tmp = vec![0.0; h * w];
    for d in -r..=r {
        let wgt = factor[(d + r) as usize];
        let cols = wrapped_indices(w, sign * d);
        for y in 0..h {
            let srow = &src[y * w..y * w + w];
            let trow = &mut tmp[y * w..y * w + w];
            for (t, &c) in trow.iter_mut().zip(&cols) {
                *t += wgt * srow[c];
            }
        }
    }

    let mut out = vec![0.0; h * w];
    for d in -r..=r {
        let wgt = factor[(d + r) as usize];
        let rows = wrapped_indices(h, sign * d);
        for y in 0..h {
            let trow = &tmp[rows[y] * w..rows[y] * w + w];
            let orow = &mut out[y * w..y * w + w];
            for (o, &t) in orow.iter_mut().zip(trow) {
                *o += wgt * t;
            }
        }
    }
    ImagePlane { height: h, width: w, data: out }
}

/// Circular 2D convolution: `out(y, x) = Σ k(i, j) · img(y − i, x − j)`.
pub fn convolve_circular(img: &ImagePlane, k: &Kernel2D) -> Result<ImagePlane> {
    check_kernel_fits(img, k)?;
    Ok(match k.separable_factor() {
        Some(f) => filter_separable(img, f, -1),
        None => filter_dense(img, k, -1),
    })
}

/// Circular 2D correlation, the exact transpose of [`convolve_circular`].
pub fn correlate_circular(img: &ImagePlane, k: &Kernel2D) -> Result<ImagePlane> {
    check_kernel_fits(img, k)?;
    Ok(match k.separable_factor() {
        Some(f) => filter_separable(img, f, 1),
        None => filter_dense(img, k, 1),
    })
}

/// Integer base offset and fractional weight of a shift along one axis.
///
/// The shifted image samples the source at `p - d`, i.e. at
/// `p + base + {0, 1}` with weights `{1 - t, t}`.
fn split_shift(d: f64) -> (isize, f64) {
    let f = -d;
    let base = f.floor();
    (base as isize, f - base)
}

fn bilinear_pass(img: &ImagePlane, dx: f64, dy: f64, sign: isize) -> ImagePlane {
    let (h, w) = img.dims();
    let (by, ty) = split_shift(dy);
    let (bx, tx) = split_shift(dx);
    let src = img.data();
    let mut out = vec![0.0; h * w];
    for (a, wy) in [(0isize, 1.0 - ty), (1, ty)] {
        if wy == 0.0 {
            continue;
        }
        let rows = wrapped_indices(h, sign * (by + a));
        for (b, wx) in [(0isize, 1.0 - tx), (1, tx)] {
            if wx == 0.0 {
                continue;
            }
            let wgt = wy * wx;
            let cols = wrapped_indices(w, sign * (bx + b));
            for y in 0..h {
                let srow = &src[rows[y] * w..rows[y] * w + w];
                let orow = &mut out[y * w..y * w + w];
                for (o, &c) in orow.iter_mut().zip(&cols) {
                    *o += wgt * srow[c];
                }
            }
        }
    }
    ImagePlane { height: h, width: w, data: out }
}

/// Translates the image content by `(dx, dy)` pixels using bilinear
/// interpolation on the periodically extended grid:
/// `out(y, x) = img(y − dy, x − dx)`.
pub fn shift_subpixel(img: &ImagePlane, dx: f64, dy: f64) -> ImagePlane {
    bilinear_pass(img, dx, dy, 1)
}

/// Transpose of [`shift_subpixel`]: scatters every pixel with the same
/// bilinear weights.
pub fn shift_subpixel_adjoint(img: &ImagePlane, dx: f64, dy: f64) -> ImagePlane {
    bilinear_pass(img, dx, dy, -1)
}

/// Keeps every `s`-th pixel in each direction, starting at the top-left.
pub fn decimate(img: &ImagePlane, s: usize) -> Result<ImagePlane> {
    let (h, w) = img.dims();
    if s == 0 {
        return param("decimation factor must be at least 1");
    }
    if h % s != 0 || w % s != 0 {
        return param(format!("{h}x{w} image is not divisible by decimation factor {s}"));
    }
    Ok(ImagePlane::from_fn(h / s, w / s, |y, x| img.get(y * s, x * s)))
}

/// Zero-insertion upsampling, the transpose of [`decimate`].
pub fn upsample_zero(img: &ImagePlane, s: usize) -> Result<ImagePlane> {
    if s == 0 {
        return param("upsampling factor must be at least 1");
    }
    let (h, w) = img.dims();
    let mut out = ImagePlane::zeros(h * s, w * s);
    for y in 0..h {
        for x in 0..w {
            out.set(y * s, x * s, img.get(y, x));
        }
    }
    Ok(out)
}

/// Circular forward differences along columns (`gx`) and rows (`gy`).
pub fn gradient_forward(img: &ImagePlane) -> GradientPair {
    let (h, w) = img.dims();
    let gx = ImagePlane::from_fn(h, w, |y, x| img.get(y, (x + 1) % w) - img.get(y, x));
    let gy = ImagePlane::from_fn(h, w, |y, x| img.get((y + 1) % h, x) - img.get(y, x));
    GradientPair { gx, gy }
}

/// Transpose of [`gradient_forward`] (the negative divergence).
pub fn gradient_adjoint(gp: &GradientPair) -> ImagePlane {
    let (h, w) = gp.dims();
    let (p, q) = (&gp.gx, &gp.gy);
    ImagePlane::from_fn(h, w, |y, x| {
        p.get(y, (x + w - 1) % w) - p.get(y, x) + q.get((y + h - 1) % h, x) - q.get(y, x)
    })
}
