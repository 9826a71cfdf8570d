//! Procedural test images.
//!
//! Benchmarks, examples and desk-scale training need textured natural-ish
//! content without shipping datasets. These scenes mix smooth shading,
//! flat-colored shapes with sharp edges, oriented gratings and fine noise.

use rand::{Rng, SeedableRng};
use rand_chacha::ChaCha8Rng;

use crate::imaging::ImagePlane;

/// Deterministic textured scene in `[0, 1]`.
pub fn textured_scene(height: usize, width: usize, seed: u64) -> ImagePlane {
    let mut rng = ChaCha8Rng::seed_from_u64(seed);
    let (hf, wf) = (height as f64, width as f64);

    let base = rng.random_range(0.25..0.55);
    let gy = rng.random_range(-0.2..0.2);
    let gx = rng.random_range(-0.2..0.2);
    let mut img = ImagePlane::from_fn(height, width, |y, x| {
        base + gy * (y as f64 / hf - 0.5) + gx * (x as f64 / wf - 0.5)
    });

    let area = hf * wf;
    let n_shapes = 6 + (area / 900.0).sqrt() as usize;
    for _ in 0..n_shapes {
        let cy = rng.random_range(0.0..hf);
        let cx = rng.random_range(0.0..wf);
        let ry = rng.random_range(0.04..0.25) * hf;
        let rx = rng.random_range(0.04..0.25) * wf;
        let value = rng.random_range(0.0..1.0);
        let ellipse = rng.random_bool(0.5);
        for y in 0..height {
            for x in 0..width {
                let dy = (y as f64 - cy) / ry;
                let dx = (x as f64 - cx) / rx;
                let inside = if ellipse { dy * dy + dx * dx <= 1.0 } else { dy.abs() <= 1.0 && dx.abs() <= 1.0 };
                if inside {
                    img.set(y, x, 0.6 * value + 0.4 * img.get(y, x));
                }
            }
        }
    }

    for _ in 0..3 {
        let theta = rng.random_range(0.0..std::f64::consts::PI);
        let period = rng.random_range(3.0..9.0);
        let amp = rng.random_range(0.04..0.1);
        let (s, c) = theta.sin_cos();
        let phase = rng.random_range(0.0..std::f64::consts::TAU);
        for y in 0..height {
            for x in 0..width {
                let t = (c * x as f64 + s * y as f64) / period * std::f64::consts::TAU + phase;
                let v = img.get(y, x) + amp * t.sin();
                img.set(y, x, v);
            }
        }
    }

    for v in img.data_mut() {
        *v += rng.random_range(-0.02..0.02);
    }
    img.clipped(0.0, 1.0)
}
