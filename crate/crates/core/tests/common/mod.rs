//! Independent oracles shared by the integration tests: dense operator
//! matrices assembled from their pointwise definitions, and central finite
//! differences.

#![allow(dead_code)]

use rand::{Rng, SeedableRng};
use rand_chacha::ChaCha8Rng;
use srcascade::erbpn::Tensor4;
use srcascade::{ImagePlane, Kernel2D};

pub fn rng(seed: u64) -> ChaCha8Rng {
    ChaCha8Rng::seed_from_u64(seed)
}

pub fn random_plane(h: usize, w: usize, seed: u64) -> ImagePlane {
    let mut r = rng(seed);
    ImagePlane::from_fn(h, w, |_, _| r.random_range(-1.0..1.0))
}

pub fn random_tensor(dims: [usize; 4], seed: u64, amp: f64) -> Tensor4 {
    let mut r = rng(seed);
    let n = dims.iter().product();
    Tensor4::new(dims, (0..n).map(|_| r.random_range(-amp..amp)).collect()).unwrap()
}

/// Row-major dense matrix.
#[derive(Debug, Clone, PartialEq)]
pub struct Dense {
    pub rows: usize,
    pub cols: usize,
    pub data: Vec<f64>,
}

impl Dense {
    pub fn zeros(rows: usize, cols: usize) -> Self {
        Self { rows, cols, data: vec![0.0; rows * cols] }
    }

    pub fn identity(n: usize) -> Self {
        let mut m = Self::zeros(n, n);
        for i in 0..n {
            m.data[i * n + i] = 1.0;
        }
        m
    }

    pub fn add_at(&mut self, r: usize, c: usize, v: f64) {
        self.data[r * self.cols + c] += v;
    }

    pub fn at(&self, r: usize, c: usize) -> f64 {
        self.data[r * self.cols + c]
    }

    pub fn matvec(&self, x: &[f64]) -> Vec<f64> {
        assert_eq!(x.len(), self.cols);
        (0..self.rows).map(|r| self.data[r * self.cols..(r + 1) * self.cols].iter().zip(x).map(|(a, b)| a * b).sum()).collect()
    }

    pub fn transpose(&self) -> Dense {
        let mut t = Dense::zeros(self.cols, self.rows);
        for r in 0..self.rows {
            for c in 0..self.cols {
                t.data[c * self.rows + r] = self.at(r, c);
            }
        }
        t
    }

    pub fn matmul(&self, o: &Dense) -> Dense {
        assert_eq!(self.cols, o.rows);
        let mut out = Dense::zeros(self.rows, o.cols);
        for i in 0..self.rows {
            for k in 0..self.cols {
                let a = self.at(i, k);
                if a == 0.0 {
                    continue;
                }
                for j in 0..o.cols {
                    out.data[i * o.cols + j] += a * o.at(k, j);
                }
            }
        }
        out
    }

    pub fn add_scaled(&mut self, alpha: f64, o: &Dense) {
        assert_eq!((self.rows, self.cols), (o.rows, o.cols));
        self.data.iter_mut().zip(&o.data).for_each(|(a, b)| *a += alpha * b);
    }
}

fn wrap(i: isize, n: usize) -> usize {
    i.rem_euclid(n as isize) as usize
}

/// `out(y, x) = Σ k(dy, dx) · in(y − dy, x − dx)` on the torus.
pub fn convolution_matrix(h: usize, w: usize, k: &Kernel2D) -> Dense {
    let r = k.radius() as isize;
    let mut m = Dense::zeros(h * w, h * w);
    for y in 0..h {
        for x in 0..w {
            for dy in -r..=r {
                for dx in -r..=r {
                    let sy = wrap(y as isize - dy, h);
                    let sx = wrap(x as isize - dx, w);
                    m.add_at(y * w + x, sy * w + sx, k.at(dy, dx));
                }
            }
        }
    }
    m
}

/// `out(y, x) = in(y − dy, x − dx)` with bilinear interpolation on the torus.
pub fn shift_matrix(h: usize, w: usize, dx: f64, dy: f64) -> Dense {
    let mut m = Dense::zeros(h * w, h * w);
    for y in 0..h {
        for x in 0..w {
            let py = y as f64 - dy;
            let px = x as f64 - dx;
            let (y0, x0) = (py.floor(), px.floor());
            let (ty, tx) = (py - y0, px - x0);
            for (oy, wy) in [(0, 1.0 - ty), (1, ty)] {
                for (ox, wx) in [(0, 1.0 - tx), (1, tx)] {
                    let sy = wrap(y0 as isize + oy, h);
                    let sx = wrap(x0 as isize + ox, w);
                    m.add_at(y * w + x, sy * w + sx, wy * wx);
                }
            }
        }
    }
    m
}

/// Keeps samples `(s·i, s·j)`.
pub fn decimation_matrix(h: usize, w: usize, s: usize) -> Dense {
    let (lh, lw) = (h / s, w / s);
    let mut m = Dense::zeros(lh * lw, h * w);
    for i in 0..lh {
        for j in 0..lw {
            m.add_at(i * lw + j, (s * i) * w + s * j, 1.0);
        }
    }
    m
}

/// Circular forward differences `(Gx, Gy)`.
pub fn gradient_matrices(h: usize, w: usize) -> (Dense, Dense) {
    let mut gx = Dense::zeros(h * w, h * w);
    let mut gy = Dense::zeros(h * w, h * w);
    for y in 0..h {
        for x in 0..w {
            let i = y * w + x;
            gx.add_at(i, y * w + (x + 1) % w, 1.0);
            gx.add_at(i, i, -1.0);
            gy.add_at(i, ((y + 1) % h) * w + x, 1.0);
            gy.add_at(i, i, -1.0);
        }
    }
    (gx, gy)
}

/// `D · B · M` for one frame.
pub fn observation_matrix(h: usize, w: usize, s: usize, k: &Kernel2D, dx: f64, dy: f64) -> Dense {
    decimation_matrix(h, w, s).matmul(&convolution_matrix(h, w, k)).matmul(&shift_matrix(h, w, dx, dy))
}

pub fn max_abs_diff(a: &[f64], b: &[f64]) -> f64 {
    assert_eq!(a.len(), b.len());
    a.iter().zip(b).map(|(x, y)| (x - y).abs()).fold(0.0, f64::max)
}

pub fn dot(a: &[f64], b: &[f64]) -> f64 {
    a.iter().zip(b).map(|(x, y)| x * y).sum()
}

/// Worst elementwise relative error of `analytic` against central finite
/// differences of `f` at `x` with step `h`, with the index where it occurs.
/// Entries whose analytic and numerical values are both below `floor` in
/// magnitude are skipped.
pub fn gradient_error(x: &[f64], analytic: &[f64], h: f64, floor: f64, mut f: impl FnMut(&[f64]) -> f64) -> (f64, usize) {
    assert_eq!(x.len(), analytic.len());
    let mut p = x.to_vec();
    let mut worst = (0.0f64, 0usize);
    for i in 0..x.len() {
        let orig = p[i];
        p[i] = orig + h;
        let fp = f(&p);
        p[i] = orig - h;
        let fm = f(&p);
        p[i] = orig;
        let num = (fp - fm) / (2.0 * h);
        let a = analytic[i];
        let scale = a.abs().max(num.abs());
        let err = if scale > floor { (a - num).abs() / scale } else { 0.0 };
        if err > worst.0 {
            worst = (err, i);
        }
    }
    worst
}

/// Central finite differences of `f` at `x` for the listed coordinates.
pub fn central_differences(x: &[f64], idx: &[usize], h: f64, mut f: impl FnMut(&[f64]) -> f64) -> Vec<f64> {
    let mut p = x.to_vec();
    idx.iter()
        .map(|&i| {
            let orig = p[i];
            p[i] = orig + h;
            let fp = f(&p);
            p[i] = orig - h;
            let fm = f(&p);
            p[i] = orig;
            (fp - fm) / (2.0 * h)
        })
        .collect()
}

pub fn relative_error(a: f64, b: f64, floor: f64) -> f64 {
    let scale = a.abs().max(b.abs());
    if scale > floor {
        (a - b).abs() / scale
    } else {
        0.0
    }
}
