//! Translational subpixel registration by circular cross-correlation.

use crate::degradation::{FrameSequence, Motion};
use crate::error::{Error, Result};
use crate::imaging::ImagePlane;

#[derive(Debug, Clone, Copy, PartialEq, Eq)]
pub enum RegistrationMode {
    /// Estimate every frame's shift against the reference frame.
    Estimate,
    /// Keep the motions already stored in the sequence (simulations).
    GroundTruth,
}

impl std::str::FromStr for RegistrationMode {
    type Err = Error;
    fn from_str(s: &str) -> Result<Self> {
        match s {
            "estimate" => Ok(RegistrationMode::Estimate),
            "ground_truth" | "ground-truth" => Ok(RegistrationMode::GroundTruth),
            other => Err(Error::Config(format!("unknown registration mode `{other}`"))),
        }
    }
}

fn zero_mean(img: &ImagePlane, what: &str) -> Result<ImagePlane> {
    let m = img.mean();
    let centered = img.map(|v| v - m);
    if centered.norm_sq() <= 1e-12 * img.len() as f64 {
        return Err(Error::Degenerate(format!("{what} has no texture to register")));
    }
    Ok(centered)
}

/// `c(dy, dx) = Σ a(y, x) · b(y + dy, x + dx)` over the periodic grid.
fn circular_cross_correlation(a: &ImagePlane, b: &ImagePlane) -> ImagePlane {
    let (h, w) = a.dims();
    let (ad, bd) = (a.data(), b.data());
    let mut out = ImagePlane::zeros(h, w);
    for dy in 0..h {
        for dx in 0..w {
            let mut acc = 0.0;
            for y in 0..h {
                let by = (y + dy) % h;
                let arow = &ad[y * w..(y + 1) * w];
                let brow = &bd[by * w..(by + 1) * w];
                // split at the wrap point to keep the inner loops branch-free
                let split = w - dx;
                acc += arow[..split].iter().zip(&brow[dx..]).map(|(p, q)| p * q).sum::<f64>();
                acc += arow[split..].iter().zip(&brow[..dx]).map(|(p, q)| p * q).sum::<f64>();
            }
            out.set(dy, dx, acc);
        }
    }
    out
}

/// Vertex of the least-squares quadratic through a 3x3 neighbourhood
/// `f[j][i]` sampled at offsets `(i - 1, j - 1)`.
fn quadratic_peak(f: [[f64; 3]; 3]) -> (f64, f64) {
    let (mut s0, mut sx, mut sy, mut sxx, mut syy, mut sxy) = (0.0, 0.0, 0.0, 0.0, 0.0, 0.0);
    for (j, row) in f.iter().enumerate() {
        for (i, &v) in row.iter().enumerate() {
            let x = i as f64 - 1.0;
            let y = j as f64 - 1.0;
            s0 += v;
            sx += x * v;
            sy += y * v;
            sxx += x * x * v;
            syy += y * y * v;
            sxy += x * y * v;
        }
    }
    // f ≈ a + b·x + c·y + d·x² + e·y² + g·x·y; x, y and xy decouple on the
    // symmetric stencil, leaving a 3x3 system for (a, d, e).
    let b = sx / 6.0;
    let c = sy / 6.0;
    let g = sxy / 4.0;
    // [9 6 6; 6 6 4; 6 4 6] [a d e]ᵀ = [s0 sxx syy]ᵀ
    let (dd, ee) = solve_curvatures(s0, sxx, syy);
    let det = 4.0 * dd * ee - g * g;
    if dd < 0.0 && ee < 0.0 && det > 0.0 {
        let x = (-2.0 * ee * b + g * c) / det;
        let y = (-2.0 * dd * c + g * b) / det;
        (x.clamp(-1.0, 1.0), y.clamp(-1.0, 1.0))
    } else {
        // saddle or flat fit: fall back to independent 1D parabolas
        let para = |m: f64, z: f64, p: f64| {
            let den = m - 2.0 * z + p;
            if den < 0.0 {
                (0.5 * (m - p) / den).clamp(-1.0, 1.0)
            } else {
                0.0
            }
        };
        (para(f[1][0], f[1][1], f[1][2]), para(f[0][1], f[1][1], f[2][1]))
    }
}

/// Solves for the quadratic coefficients `d`, `e` of the 3x3 fit.
fn solve_curvatures(s0: f64, sxx: f64, syy: f64) -> (f64, f64) {
    // Normal equations [9 6 6; 6 6 4; 6 4 6]·(a, d, e)ᵀ = (s0, sxx, syy)ᵀ.
    // Subtracting 2/3 of the first row from the others decouples d and e.
    let d = (sxx - 2.0 / 3.0 * s0) / 2.0;
    let e = (syy - 2.0 / 3.0 * s0) / 2.0;
    (d, e)
}

/// Translation `(dx, dy)` in pixels such that `target ≈ shift(reference, dx, dy)`.
///
/// The integer peak of the circular cross-correlation of the zero-mean
/// images is refined with a quadratic fit of its 3x3 neighbourhood.
pub fn estimate_shift(reference: &ImagePlane, target: &ImagePlane) -> Result<(f64, f64)> {
    reference.check_same_dims(target, "registration")?;
    reference.ensure_finite("reference frame")?;
    target.ensure_finite("target frame")?;
    let a = zero_mean(reference, "reference frame")?;
    let b = zero_mean(target, "target frame")?;
    let corr = circular_cross_correlation(&a, &b);
    let (h, w) = corr.dims();

    let (mut py, mut px, mut best) = (0, 0, f64::NEG_INFINITY);
    for y in 0..h {
        for x in 0..w {
            let v = corr.get(y, x);
            if v > best {
                best = v;
                py = y;
                px = x;
            }
        }
    }
    let mut nb = [[0.0; 3]; 3];
    for (j, row) in nb.iter_mut().enumerate() {
        for (i, v) in row.iter_mut().enumerate() {
            *v = corr.get_wrapped(py as isize + j as isize - 1, px as isize + i as isize - 1);
        }
    }
    let (fx, fy) = if h >= 3 && w >= 3 { quadratic_peak(nb) } else { (0.0, 0.0) };

    let signed = |p: usize, n: usize| if p > n / 2 { p as f64 - n as f64 } else { p as f64 };
    Ok((signed(px, w) + fx, signed(py, h) + fy))
}

/// Fills in per-frame motions (HR pixels) relative to the reference frame.
pub fn register_sequence(seq: &FrameSequence, mode: RegistrationMode) -> Result<FrameSequence> {
    seq.validate()?;
    match mode {
        RegistrationMode::GroundTruth => Ok(seq.clone()),
        RegistrationMode::Estimate => {
            let s = seq.spec.scale as f64;
            let reference = seq.reference();
            let motions = seq
                .frames
                .iter()
                .enumerate()
                .map(|(k, f)| {
                    if k == seq.reference_index {
                        Ok(Motion::ZERO)
                    } else {
                        estimate_shift(reference, f).map(|(dx, dy)| Motion::new(dx * s, dy * s))
                    }
                })
                .collect::<Result<Vec<_>>>()?;
            Ok(FrameSequence { motions, ..seq.clone() })
        }
    }
}
