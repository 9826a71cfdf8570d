use super::ImagePlane;
use crate::error::{param, Result};

const CUBIC_A: f64 = -0.5;

/// Cubic convolution kernel with `a = -0.5` (Catmull-Rom).
pub fn cubic_weight(x: f64) -> f64 {
    let t = x.abs();
    if t <= 1.0 {
        ((CUBIC_A + 2.0) * t - (CUBIC_A + 3.0)) * t * t + 1.0
    } else if t < 2.0 {
        ((CUBIC_A * t - 5.0 * CUBIC_A) * t + 8.0 * CUBIC_A) * t - 4.0 * CUBIC_A
    } else {
        0.0
    }
}

/// Taps `(source index, weight)` for one output index along one axis.
fn axis_taps(in_len: usize, out_len: usize, scale: f64, offset: f64) -> Vec<Vec<(usize, f64)>> {
    // Downscaling widens the kernel so it acts as an anti-aliasing filter.
    let stretch = scale.min(1.0);
    let support = 2.0 / stretch;
    let last = in_len as isize - 1;
    (0..out_len)
        .map(|o| {
            let center = (o as f64 + offset) / scale;
            let lo = (center - support).floor() as isize;
            let hi = (center + support).ceil() as isize;
            let mut taps: Vec<(usize, f64)> = Vec::with_capacity((hi - lo + 1) as usize);
            let mut total = 0.0;
            for i in lo..=hi {
                let wgt = cubic_weight((center - i as f64) * stretch);
                if wgt == 0.0 {
                    continue;
                }
                total += wgt;
                let idx = i.clamp(0, last) as usize;
                match taps.iter_mut().find(|(j, _)| *j == idx) {
                    Some(t) => t.1 += wgt,
                    None => taps.push((idx, wgt)),
                }
            }
            if total != 1.0 {
                taps.iter_mut().for_each(|t| t.1 /= total);
            }
            taps
        })
        .collect()
}

/// Separable bicubic resampling with replicated edges.
///
/// Output pixel `(y, x)` samples the input at
/// `((y + offset_y) / scale, (x + offset_x) / scale)`, so sample 0 of the
/// output lines up with sample 0 of the input when the offsets are zero.
/// This is the same phase convention as [`super::decimate`].
pub fn resample_bicubic(
    img: &ImagePlane,
    out_height: usize,
    out_width: usize,
    scale: f64,
    offset_y: f64,
    offset_x: f64,
) -> Result<ImagePlane> {
    if !(scale > 0.0) || !scale.is_finite() {
        return param(format!("resampling scale must be positive, got {scale}"));
    }
    if out_height == 0 || out_width == 0 {
        return param("resampled image would be empty");
    }
    let (h, w) = img.dims();
    let row_taps = axis_taps(h, out_height, scale, offset_y);
    let col_taps = axis_taps(w, out_width, scale, offset_x);

    let mut tmp = vec![0.0; h * out_width];
    for y in 0..h {
        let src = &img.data()[y * w..(y + 1) * w];
        for (x, taps) in col_taps.iter().enumerate() {
            tmp[y * out_width + x] = taps.iter().map(|&(i, wg)| wg * src[i]).sum();
        }
    }
    let mut out = vec![0.0; out_height * out_width];
    for (y, taps) in row_taps.iter().enumerate() {
        let orow = &mut out[y * out_width..(y + 1) * out_width];
        for &(i, wg) in taps {
            let trow = &tmp[i * out_width..(i + 1) * out_width];
            for (o, t) in orow.iter_mut().zip(trow) {
                *o += wg * t;
            }
        }
    }
    ImagePlane::new(out_height, out_width, out)
}

/// Bicubic resize by `scale`; output dimensions are `round(scale · dims)`.
pub fn resize_bicubic(img: &ImagePlane, scale: f64) -> Result<ImagePlane> {
    if !(scale > 0.0) || !scale.is_finite() {
        return param(format!("resize scale must be positive, got {scale}"));
    }
    let oh = (img.height() as f64 * scale).round() as usize;
    let ow = (img.width() as f64 * scale).round() as usize;
    resample_bicubic(img, oh, ow, scale, 0.0, 0.0)
}
