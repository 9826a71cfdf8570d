//! Convolution, transposed convolution and parametric rectifier layers with
//! exact backward passes.
//!
//! Both convolution directions are expressed through `im2col`/`col2im` and a
//! dense matrix product. With a shared weight tensor, [`deconv2d`] is the
//! exact adjoint of [`conv2d`] at zero bias.

use rand::Rng;
use rand_distr::{Distribution, Normal};

use super::tensor::Tensor4;
use crate::error::{param, Result};

/// `C = A·B + beta·C` for row-major operands, optionally transposed.
#[allow(clippy::too_many_arguments)]
fn gemm(
    m: usize,
    k: usize,
    n: usize,
    a: &[f64],
    a_t: bool,
    b: &[f64],
    b_t: bool,
    beta: f64,
    c: &mut [f64],
) {
    debug_assert_eq!(a.len(), m * k);
    debug_assert_eq!(b.len(), k * n);
    debug_assert_eq!(c.len(), m * n);
    let (rsa, csa) = if a_t { (1, m as isize) } else { (k as isize, 1) };
    let (rsb, csb) = if b_t { (1, k as isize) } else { (n as isize, 1) };
    // SAFETY: the slices hold exactly m·k, k·n and m·n elements and the
    // strides above address them in-bounds for the stated shapes.
    unsafe {
        matrixmultiply::dgemm(
            m,
            k,
            n,
            1.0,
            a.as_ptr(),
            rsa,
            csa,
            b.as_ptr(),
            rsb,
            csb,
            beta,
            c.as_mut_ptr(),
            n as isize,
            1,
        );
    }
}

/// Spatial layout shared by `im2col` and `col2im`.
#[derive(Debug, Clone, Copy)]
struct Geometry {
    channels: usize,
    in_h: usize,
    in_w: usize,
    kernel: usize,
    stride: usize,
    padding: usize,
    out_h: usize,
    out_w: usize,
}

impl Geometry {
    fn rows(&self) -> usize {
        self.channels * self.kernel * self.kernel
    }
    fn cols(&self) -> usize {
        self.out_h * self.out_w
    }
}

fn im2col(x: &[f64], g: &Geometry) -> Vec<f64> {
    let cols = g.cols();
    let mut out = vec![0.0; g.rows() * cols];
    let (ih, iw) = (g.in_h as isize, g.in_w as isize);
    for c in 0..g.channels {
        let plane = &x[c * g.in_h * g.in_w..(c + 1) * g.in_h * g.in_w];
        for ki in 0..g.kernel {
            for kj in 0..g.kernel {
                let row = (c * g.kernel + ki) * g.kernel + kj;
                let dst = &mut out[row * cols..(row + 1) * cols];
                for oy in 0..g.out_h {
                    let y = (oy * g.stride + ki) as isize - g.padding as isize;
                    if y < 0 || y >= ih {
                        continue;
                    }
                    let src = &plane[y as usize * g.in_w..(y as usize + 1) * g.in_w];
                    for ox in 0..g.out_w {
                        let xx = (ox * g.stride + kj) as isize - g.padding as isize;
                        if xx >= 0 && xx < iw {
                            dst[oy * g.out_w + ox] = src[xx as usize];
                        }
                    }
                }
            }
        }
    }
    out
}

/// Transpose of [`im2col`]: scatters columns back onto the image.
fn col2im(cols_buf: &[f64], g: &Geometry) -> Vec<f64> {
    let cols = g.cols();
    let mut out = vec![0.0; g.channels * g.in_h * g.in_w];
    let (ih, iw) = (g.in_h as isize, g.in_w as isize);
    for c in 0..g.channels {
        let plane = &mut out[c * g.in_h * g.in_w..(c + 1) * g.in_h * g.in_w];
        for ki in 0..g.kernel {
            for kj in 0..g.kernel {
                let row = (c * g.kernel + ki) * g.kernel + kj;
                let src = &cols_buf[row * cols..(row + 1) * cols];
                for oy in 0..g.out_h {
                    let y = (oy * g.stride + ki) as isize - g.padding as isize;
                    if y < 0 || y >= ih {
                        continue;
                    }
                    let dst = &mut plane[y as usize * g.in_w..(y as usize + 1) * g.in_w];
                    for ox in 0..g.out_w {
                        let xx = (ox * g.stride + kj) as isize - g.padding as isize;
                        if xx >= 0 && xx < iw {
                            dst[xx as usize] += src[oy * g.out_w + ox];
                        }
                    }
                }
            }
        }
    }
    out
}

/// Output side of a strided convolution, if the geometry tiles exactly.
pub fn conv_output_size(input: usize, kernel: usize, stride: usize, padding: usize) -> Result<usize> {
    if stride == 0 || kernel == 0 {
        return param("kernel and stride must be positive");
    }
    let padded = input + 2 * padding;
    if padded < kernel {
        return param(format!("input {input} with padding {padding} is smaller than kernel {kernel}"));
    }
    if (padded - kernel) % stride != 0 {
        return param(format!(
            "input {input} (padding {padding}) is not tiled by kernel {kernel} at stride {stride}"
        ));
    }
    Ok((padded - kernel) / stride + 1)
}

/// Output side of a transposed convolution: `(input − 1)·stride − 2·padding + kernel`.
pub fn deconv_output_size(input: usize, kernel: usize, stride: usize, padding: usize) -> Result<usize> {
    if stride == 0 || kernel == 0 || input == 0 {
        return param("input, kernel and stride must be positive");
    }
    let full = (input - 1) * stride + kernel;
    if full <= 2 * padding {
        return param(format!("transposed convolution output would be empty (input {input})"));
    }
    Ok(full - 2 * padding)
}

fn conv_geometry(input: &Tensor4, weights: &Tensor4, stride: usize, padding: usize) -> Result<Geometry> {
    let [_, cin, h, w] = input.dims();
    let [_, wcin, kh, kw] = weights.dims();
    if kh != kw {
        return param("kernels must be square");
    }
    if cin != wcin {
        return param(format!("input has {cin} channels, weights expect {wcin}"));
    }
    Ok(Geometry {
        channels: cin,
        in_h: h,
        in_w: w,
        kernel: kh,
        stride,
        padding,
        out_h: conv_output_size(h, kh, stride, padding)?,
        out_w: conv_output_size(w, kh, stride, padding)?,
    })
}

/// Geometry of the convolution whose adjoint the transposed convolution is:
/// its "input" is the transposed convolution's output.
fn deconv_geometry(input: &Tensor4, weights: &Tensor4, stride: usize, padding: usize) -> Result<Geometry> {
    let [_, cin, h, w] = input.dims();
    let [wcin, cout, kh, kw] = weights.dims();
    if kh != kw {
        return param("kernels must be square");
    }
    if cin != wcin {
        return param(format!("input has {cin} channels, weights expect {wcin}"));
    }
    Ok(Geometry {
        channels: cout,
        in_h: deconv_output_size(h, kh, stride, padding)?,
        in_w: deconv_output_size(w, kh, stride, padding)?,
        kernel: kh,
        stride,
        padding,
        out_h: h,
        out_w: w,
    })
}

fn check_bias(bias: &[f64], channels: usize) -> Result<()> {
    if bias.len() != channels {
        return param(format!("bias has {} entries for {channels} channels", bias.len()));
    }
    Ok(())
}

/// Strided cross-correlation plus bias. Weights are `(out, in, k, k)`.
pub fn conv2d(input: &Tensor4, weights: &Tensor4, bias: &[f64], stride: usize, padding: usize) -> Result<Tensor4> {
    let g = conv_geometry(input, weights, stride, padding)?;
    let cout = weights.dims()[0];
    check_bias(bias, cout)?;
    let n = input.batch();
    let plane = g.cols();
    let mut out = Tensor4::zeros([n, cout, g.out_h, g.out_w]);
    for i in 0..n {
        let cols = im2col(input.sample(i), &g);
        let dst = out.sample_mut(i);
        for (c, &b) in bias.iter().enumerate() {
            dst[c * plane..(c + 1) * plane].fill(b);
        }
        gemm(cout, g.rows(), plane, weights.data(), false, &cols, false, 1.0, dst);
    }
    Ok(out)
}

/// Gradients of a scalar loss with respect to a layer's input and parameters.
#[derive(Debug, Clone, PartialEq)]
pub struct ConvGrads {
    pub input: Tensor4,
    pub weights: Tensor4,
    pub bias: Vec<f64>,
}

pub fn conv2d_backward(
    input: &Tensor4,
    weights: &Tensor4,
    stride: usize,
    padding: usize,
    grad_out: &Tensor4,
) -> Result<ConvGrads> {
    let g = conv_geometry(input, weights, stride, padding)?;
    let cout = weights.dims()[0];
    if grad_out.dims() != [input.batch(), cout, g.out_h, g.out_w] {
        return param("output gradient shape does not match the convolution");
    }
    let plane = g.cols();
    let mut gw = Tensor4::zeros(weights.dims());
    let mut gb = vec![0.0; cout];
    let mut gi = Tensor4::zeros(input.dims());
    for i in 0..input.batch() {
        let dy = grad_out.sample(i);
        let cols = im2col(input.sample(i), &g);
        gemm(cout, plane, g.rows(), dy, false, &cols, true, 1.0, gw.data_mut());
        for (c, b) in gb.iter_mut().enumerate() {
            *b += dy[c * plane..(c + 1) * plane].iter().sum::<f64>();
        }
        let mut dcols = vec![0.0; g.rows() * plane];
        gemm(g.rows(), cout, plane, weights.data(), true, dy, false, 0.0, &mut dcols);
        gi.sample_mut(i).copy_from_slice(&col2im(&dcols, &g));
    }
    Ok(ConvGrads { input: gi, weights: gw, bias: gb })
}

/// Transposed convolution plus bias. Weights are `(in, out, k, k)`, so the
/// same tensor used by [`conv2d`] maps back from its output space.
pub fn deconv2d(input: &Tensor4, weights: &Tensor4, bias: &[f64], stride: usize, padding: usize) -> Result<Tensor4> {
    let g = deconv_geometry(input, weights, stride, padding)?;
    let cin = input.channels();
    check_bias(bias, g.channels)?;
    let n = input.batch();
    let lr_plane = g.cols();
    let hr_plane = g.in_h * g.in_w;
    let mut out = Tensor4::zeros([n, g.channels, g.in_h, g.in_w]);
    for i in 0..n {
        let mut cols = vec![0.0; g.rows() * lr_plane];
        gemm(g.rows(), cin, lr_plane, weights.data(), true, input.sample(i), false, 0.0, &mut cols);
        let img = col2im(&cols, &g);
        let dst = out.sample_mut(i);
        for (c, &b) in bias.iter().enumerate() {
            for (d, v) in dst[c * hr_plane..(c + 1) * hr_plane].iter_mut().zip(&img[c * hr_plane..]) {
                *d = v + b;
            }
        }
    }
    Ok(out)
}

pub fn deconv2d_backward(
    input: &Tensor4,
    weights: &Tensor4,
    stride: usize,
    padding: usize,
    grad_out: &Tensor4,
) -> Result<ConvGrads> {
    let g = deconv_geometry(input, weights, stride, padding)?;
    let cin = input.channels();
    if grad_out.dims() != [input.batch(), g.channels, g.in_h, g.in_w] {
        return param("output gradient shape does not match the transposed convolution");
    }
    let lr_plane = g.cols();
    let hr_plane = g.in_h * g.in_w;
    let mut gw = Tensor4::zeros(weights.dims());
    let mut gb = vec![0.0; g.channels];
    let mut gi = Tensor4::zeros(input.dims());
    for i in 0..input.batch() {
        let dy = grad_out.sample(i);
        for (c, b) in gb.iter_mut().enumerate() {
            *b += dy[c * hr_plane..(c + 1) * hr_plane].iter().sum::<f64>();
        }
        let dcols = im2col(dy, &g);
        gemm(cin, g.rows(), lr_plane, weights.data(), false, &dcols, false, 0.0, gi.sample_mut(i));
        gemm(cin, lr_plane, g.rows(), input.sample(i), false, &dcols, true, 1.0, gw.data_mut());
    }
    Ok(ConvGrads { input: gi, weights: gw, bias: gb })
}

/// Per-channel parametric rectifier: `x` if `x > 0`, else `slope·x`.
pub fn prelu(input: &Tensor4, slopes: &[f64]) -> Result<Tensor4> {
    let [n, c, h, w] = input.dims();
    check_bias(slopes, c)?;
    let hw = h * w;
    let mut out = input.clone();
    for i in 0..n {
        let s = out.sample_mut(i);
        for (ch, &a) in slopes.iter().enumerate() {
            for v in &mut s[ch * hw..(ch + 1) * hw] {
                if *v <= 0.0 {
                    *v *= a;
                }
            }
        }
    }
    Ok(out)
}

/// Returns `(input gradient, slope gradient)`.
pub fn prelu_backward(input: &Tensor4, slopes: &[f64], grad_out: &Tensor4) -> Result<(Tensor4, Vec<f64>)> {
    let [n, c, h, w] = input.dims();
    check_bias(slopes, c)?;
    if grad_out.dims() != input.dims() {
        return param("output gradient shape does not match the activation");
    }
    let hw = h * w;
    let mut gi = grad_out.clone();
    let mut gs = vec![0.0; c];
    for i in 0..n {
        let x = input.sample(i);
        let d = gi.sample_mut(i);
        for (ch, &a) in slopes.iter().enumerate() {
            for j in ch * hw..(ch + 1) * hw {
                if x[j] <= 0.0 {
                    gs[ch] += d[j] * x[j];
                    d[j] *= a;
                }
            }
        }
    }
    Ok((gi, gs))
}

#[derive(Debug, Clone, Copy, PartialEq, Eq)]
pub enum LayerKind {
    Conv,
    Deconv,
}

/// One convolution or transposed convolution, optionally followed by a
/// parametric rectifier.
#[derive(Debug, Clone, PartialEq)]
pub struct LayerParams {
    pub kind: LayerKind,
    /// `(out, in, k, k)` for convolutions, `(in, out, k, k)` for transposed ones.
    pub weights: Tensor4,
    pub bias: Vec<f64>,
    pub stride: usize,
    pub padding: usize,
    pub slopes: Option<Vec<f64>>,
}

/// Values saved by [`LayerParams::forward`] for the backward pass.
#[derive(Debug, Clone)]
pub struct LayerCache {
    input: Tensor4,
    pre_activation: Option<Tensor4>,
}

pub const INITIAL_SLOPE: f64 = 0.25;

impl LayerParams {
    pub fn new(
        kind: LayerKind,
        in_ch: usize,
        out_ch: usize,
        kernel: usize,
        stride: usize,
        padding: usize,
        activation: bool,
    ) -> Self {
        let dims = match kind {
            LayerKind::Conv => [out_ch, in_ch, kernel, kernel],
            LayerKind::Deconv => [in_ch, out_ch, kernel, kernel],
        };
        Self {
            kind,
            weights: Tensor4::zeros(dims),
            bias: vec![0.0; out_ch],
            stride,
            padding,
            slopes: activation.then(|| vec![INITIAL_SLOPE; out_ch]),
        }
    }

    pub fn conv(in_ch: usize, out_ch: usize, kernel: usize, stride: usize, padding: usize, activation: bool) -> Self {
        Self::new(LayerKind::Conv, in_ch, out_ch, kernel, stride, padding, activation)
    }

    pub fn deconv(in_ch: usize, out_ch: usize, kernel: usize, stride: usize, padding: usize, activation: bool) -> Self {
        Self::new(LayerKind::Deconv, in_ch, out_ch, kernel, stride, padding, activation)
    }

    pub fn in_channels(&self) -> usize {
        match self.kind {
            LayerKind::Conv => self.weights.dims()[1],
            LayerKind::Deconv => self.weights.dims()[0],
        }
    }

    pub fn out_channels(&self) -> usize {
        match self.kind {
            LayerKind::Conv => self.weights.dims()[0],
            LayerKind::Deconv => self.weights.dims()[1],
        }
    }

    pub fn kernel(&self) -> usize {
        self.weights.dims()[2]
    }

    pub fn output_size(&self, h: usize, w: usize) -> Result<(usize, usize)> {
        let f = match self.kind {
            LayerKind::Conv => conv_output_size,
            LayerKind::Deconv => deconv_output_size,
        };
        Ok((f(h, self.kernel(), self.stride, self.padding)?, f(w, self.kernel(), self.stride, self.padding)?))
    }

    /// Fan-in scaled Gaussian weights; `gain` is 2 for rectified layers.
    pub fn init_weights<R: Rng>(&mut self, rng: &mut R, gain: f64) {
        let k2 = (self.kernel() * self.kernel()) as f64;
        let fan_in = match self.kind {
            LayerKind::Conv => self.in_channels() as f64 * k2,
            LayerKind::Deconv => self.in_channels() as f64 * k2 / (self.stride * self.stride) as f64,
        };
        let normal = Normal::new(0.0, (gain / fan_in).sqrt()).expect("finite std");
        for w in self.weights.data_mut() {
            *w = normal.sample(rng);
        }
        self.bias.fill(0.0);
        if let Some(s) = self.slopes.as_mut() {
            s.fill(INITIAL_SLOPE);
        }
    }

    pub fn zeros_like(&self) -> Self {
        Self {
            kind: self.kind,
            weights: Tensor4::zeros(self.weights.dims()),
            bias: vec![0.0; self.bias.len()],
            stride: self.stride,
            padding: self.padding,
            slopes: self.slopes.as_ref().map(|s| vec![0.0; s.len()]),
        }
    }

    pub fn param_count(&self) -> usize {
        self.weights.len() + self.bias.len() + self.slopes.as_ref().map_or(0, Vec::len)
    }

    /// Weights, bias and (if present) slopes, in that order.
    pub fn param_slices(&self) -> Vec<&[f64]> {
        let mut v: Vec<&[f64]> = vec![self.weights.data(), &self.bias];
        if let Some(s) = &self.slopes {
            v.push(s);
        }
        v
    }

    pub fn param_slices_mut(&mut self) -> Vec<&mut [f64]> {
        let mut v: Vec<&mut [f64]> = vec![self.weights.data_mut(), &mut self.bias];
        if let Some(s) = &mut self.slopes {
            v.push(s);
        }
        v
    }

    fn linear(&self, x: &Tensor4) -> Result<Tensor4> {
        match self.kind {
            LayerKind::Conv => conv2d(x, &self.weights, &self.bias, self.stride, self.padding),
            LayerKind::Deconv => deconv2d(x, &self.weights, &self.bias, self.stride, self.padding),
        }
    }

    pub fn forward(&self, x: &Tensor4) -> Result<(Tensor4, LayerCache)> {
        let pre = self.linear(x)?;
        match &self.slopes {
            Some(s) => {
                let out = prelu(&pre, s)?;
                Ok((out, LayerCache { input: x.clone(), pre_activation: Some(pre) }))
            }
            None => Ok((pre, LayerCache { input: x.clone(), pre_activation: None })),
        }
    }

    pub fn infer(&self, x: &Tensor4) -> Result<Tensor4> {
        let pre = self.linear(x)?;
        match &self.slopes {
            Some(s) => prelu(&pre, s),
            None => Ok(pre),
        }
    }

    /// Accumulates parameter gradients into `grads` and returns the input gradient.
    pub fn backward(&self, cache: &LayerCache, grad_out: &Tensor4, grads: &mut LayerParams) -> Result<Tensor4> {
        let grad_pre = match (&self.slopes, &cache.pre_activation) {
            (Some(s), Some(pre)) => {
                let (gi, gs) = prelu_backward(pre, s, grad_out)?;
                if let Some(acc) = grads.slopes.as_mut() {
                    acc.iter_mut().zip(&gs).for_each(|(a, g)| *a += g);
                }
                gi
            }
            _ => grad_out.clone(),
        };
        let g = match self.kind {
            LayerKind::Conv => conv2d_backward(&cache.input, &self.weights, self.stride, self.padding, &grad_pre)?,
            LayerKind::Deconv => {
                deconv2d_backward(&cache.input, &self.weights, self.stride, self.padding, &grad_pre)?
            }
        };
        grads.weights.add_assign(&g.weights);
        grads.bias.iter_mut().zip(&g.bias).for_each(|(a, b)| *a += b);
        Ok(g.input)
    }
}
