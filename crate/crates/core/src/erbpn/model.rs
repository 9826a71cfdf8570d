use std::path::Path;

use rand::SeedableRng;
use rand_chacha::ChaCha8Rng;

use super::layers::{LayerCache, LayerKind, LayerParams};
use super::tensor::Tensor4;
use crate::error::{param, Error, Result};
use crate::imaging::{resize_bicubic, ImagePlane};

/// Kernel, stride and padding of the sampling layers for a stage scale.
pub fn stage_geometry(scale: usize) -> Result<(usize, usize, usize)> {
    match scale {
        2 => Ok((6, 2, 2)),
        4 => Ok((8, 4, 2)),
        8 => Ok((12, 8, 2)),
        other => param(format!("unsupported network scale {other} (expected 2, 4 or 8)")),
    }
}

#[derive(Debug, Clone, Copy, PartialEq, Eq)]
pub struct ErbpnConfig {
    pub scale: usize,
    /// Number of up-projection units; one fewer downsampling units.
    pub units: usize,
    pub n_f: usize,
    /// Width of the initial 3x3 feature layer, before pooling.
    pub n0: usize,
    /// Input channels.
    pub n_l: usize,
}

impl Default for ErbpnConfig {
    fn default() -> Self {
        Self { scale: 2, units: 3, n_f: 32, n0: 64, n_l: 1 }
    }
}

impl ErbpnConfig {
    pub fn tiny(scale: usize) -> Self {
        Self { scale, units: 2, n_f: 4, n0: 8, n_l: 1 }
    }

    pub fn validate(&self) -> Result<()> {
        stage_geometry(self.scale)?;
        if self.units == 0 || self.n_f == 0 || self.n0 == 0 {
            return param("units, n_f and n0 must be positive");
        }
        if self.n_l != 1 {
            return param("only single-channel (luminance) networks are supported");
        }
        Ok(())
    }
}

/// Deconvolution, convolution back to LR, and a second deconvolution of the
/// LR residual.
#[derive(Debug, Clone, PartialEq)]
pub struct UpUnit {
    pub up1: LayerParams,
    pub down: LayerParams,
    pub up2: LayerParams,
}

#[derive(Debug, Clone)]
pub struct UpCache {
    c1: LayerCache,
    c2: LayerCache,
    c3: LayerCache,
}

impl UpUnit {
    pub fn new(n_f: usize, scale: usize) -> Result<Self> {
        let (k, s, p) = stage_geometry(scale)?;
        Ok(Self {
            up1: LayerParams::deconv(n_f, n_f, k, s, p, true),
            down: LayerParams::conv(n_f, n_f, k, s, p, true),
            up2: LayerParams::deconv(n_f, n_f, k, s, p, true),
        })
    }

    pub fn forward(&self, l: &Tensor4) -> Result<(Tensor4, UpCache)> {
        let (h0, c1) = self.up1.forward(l)?;
        let (l0, c2) = self.down.forward(&h0)?;
        let e = l0.sub(l);
        let (h1, c3) = self.up2.forward(&e)?;
        Ok((h0.add(&h1), UpCache { c1, c2, c3 }))
    }

    pub fn backward(&self, cache: &UpCache, grad: &Tensor4, grads: &mut UpUnit) -> Result<Tensor4> {
        let ge = self.up2.backward(&cache.c3, grad, &mut grads.up2)?;
        let mut gh0 = self.down.backward(&cache.c2, &ge, &mut grads.down)?;
        gh0.add_assign(grad);
        let mut gl = ge.neg();
        gl.add_assign(&self.up1.backward(&cache.c1, &gh0, &mut grads.up1)?);
        Ok(gl)
    }

    fn layers(&self) -> [&LayerParams; 3] {
        [&self.up1, &self.down, &self.up2]
    }

    fn layers_mut(&mut self) -> [&mut LayerParams; 3] {
        [&mut self.up1, &mut self.down, &mut self.up2]
    }
}

pub fn up_projection_unit(l: &Tensor4, unit: &UpUnit) -> Result<Tensor4> {
    unit.forward(l).map(|(h, _)| h)
}

pub fn downsample_unit(h: &Tensor4, layer: &LayerParams) -> Result<Tensor4> {
    layer.infer(h)
}

/// Builds the `n` fusion layers of a sequential fold over `n` maps.
pub fn sff_layers(n: usize, n_f: usize) -> Vec<LayerParams> {
    (0..n).map(|_| LayerParams::conv(2 * n_f, n_f, 3, 1, 1, true)).collect()
}

fn check_maps(maps: &[&Tensor4], layers: &[LayerParams]) -> Result<()> {
    let Some(first) = maps.first() else { return param("feature fusion needs at least one map") };
    if maps.len() != layers.len() {
        return param(format!("{} maps for {} fusion layers", maps.len(), layers.len()));
    }
    if maps.iter().any(|m| m.dims() != first.dims()) {
        return param("feature fusion maps must share their dimensions");
    }
    Ok(())
}

/// `y⁰ = 0`, `yᵗ = f_t([mᵗ; yᵗ⁻¹])`; returns `yⁿ`.
pub fn sff(maps: &[&Tensor4], layers: &[LayerParams]) -> Result<Tensor4> {
    sff_forward(maps, layers).map(|(y, _)| y)
}

pub fn sff_forward(maps: &[&Tensor4], layers: &[LayerParams]) -> Result<(Tensor4, Vec<LayerCache>)> {
    check_maps(maps, layers)?;
    let [n, _, h, w] = maps[0].dims();
    let mut y = Tensor4::zeros([n, layers[0].out_channels(), h, w]);
    let mut caches = Vec::with_capacity(layers.len());
    for (m, layer) in maps.iter().zip(layers) {
        let x = Tensor4::concat_channels(m, &y)?;
        let (next, cache) = layer.forward(&x)?;
        caches.push(cache);
        y = next;
    }
    Ok((y, caches))
}

/// Returns one gradient per input map.
pub fn sff_backward(
    maps: &[&Tensor4],
    layers: &[LayerParams],
    caches: &[LayerCache],
    grad: &Tensor4,
    grads: &mut [LayerParams],
) -> Result<Vec<Tensor4>> {
    let mut gy = grad.clone();
    let mut out = vec![Tensor4::zeros(maps[0].dims()); maps.len()];
    for t in (0..layers.len()).rev() {
        let gx = layers[t].backward(&caches[t], &gy, &mut grads[t])?;
        let (gm, gprev) = gx.split_channels(maps[t].channels());
        out[t] = gm;
        gy = gprev;
    }
    Ok(out)
}

/// Enhanced residual back-projection network for one upscaling stage.
#[derive(Debug, Clone, PartialEq)]
pub struct ErbpnModel {
    pub config: ErbpnConfig,
    pub init: LayerParams,
    pub pool: LayerParams,
    pub up_fusion: Vec<Vec<LayerParams>>,
    pub up: Vec<UpUnit>,
    pub down_fusion: Vec<Vec<LayerParams>>,
    pub down: Vec<LayerParams>,
    pub recon_fusion: Vec<LayerParams>,
    pub recon: LayerParams,
}

/// Intermediate values recorded by [`ErbpnModel::forward_train`].
#[derive(Debug, Clone)]
pub struct ForwardTape {
    init: LayerCache,
    pool: LayerCache,
    lr_maps: Vec<Tensor4>,
    hr_maps: Vec<Tensor4>,
    up_fusion: Vec<Vec<LayerCache>>,
    up: Vec<UpCache>,
    down_fusion: Vec<Vec<LayerCache>>,
    down: Vec<LayerCache>,
    recon_fusion: Vec<LayerCache>,
    recon: LayerCache,
}

const MAGIC: &[u8; 8] = b"ERBPNW\0\0";
const FORMAT_VERSION: u32 = 1;
/// Gain of the reconstruction layer at initialization, so an untrained
/// network starts close to the bicubic upsampler.
const RECON_INIT_GAIN: f64 = 0.01;

impl ErbpnModel {
    /// Architecture with every parameter zero and rectifier slopes at their
    /// initial value.
    pub fn zeros(config: ErbpnConfig) -> Result<Self> {
        config.validate()?;
        let (k, s, p) = stage_geometry(config.scale)?;
        let t = config.units;
        let nf = config.n_f;
        Ok(Self {
            config,
            init: LayerParams::conv(config.n_l, config.n0, 3, 1, 1, true),
            pool: LayerParams::conv(config.n0, nf, 1, 1, 0, true),
            up_fusion: (1..=t).map(|i| sff_layers(i, nf)).collect(),
            up: (0..t).map(|_| UpUnit::new(nf, config.scale)).collect::<Result<_>>()?,
            down_fusion: (1..t).map(|i| sff_layers(i, nf)).collect(),
            down: (1..t).map(|_| LayerParams::conv(nf, nf, k, s, p, true)).collect(),
            recon_fusion: sff_layers(t, nf),
            recon: LayerParams::conv(nf, config.n_l, 3, 1, 1, false),
        })
    }

    /// Fan-in scaled Gaussian initialization from `seed`.
    pub fn new(config: ErbpnConfig, seed: u64) -> Result<Self> {
        let mut model = Self::zeros(config)?;
        let mut rng = ChaCha8Rng::seed_from_u64(seed);
        for layer in model.layers_mut() {
            let gain = if layer.slopes.is_some() { 2.0 / (1.0 + 0.25f64.powi(2)) } else { RECON_INIT_GAIN };
            layer.init_weights(&mut rng, gain);
        }
        Ok(model)
    }

    pub fn scale(&self) -> usize {
        self.config.scale
    }

    /// Same architecture, all parameters (slopes included) zero.
    pub fn zeros_like(&self) -> Self {
        let mut z = self.clone();
        for layer in z.layers_mut() {
            *layer = layer.zeros_like();
        }
        z
    }

    /// Layers in declaration order: init, pool, then per unit its up fusion,
    /// up-projection and (except the last) down fusion and downsampler,
    /// then the reconstruction fusion and output conv.
    pub fn layers(&self) -> Vec<&LayerParams> {
        let mut v = vec![&self.init, &self.pool];
        for t in 0..self.config.units {
            v.extend(self.up_fusion[t].iter());
            v.extend(self.up[t].layers());
            if t + 1 < self.config.units {
                v.extend(self.down_fusion[t].iter());
                v.push(&self.down[t]);
            }
        }
        v.extend(self.recon_fusion.iter());
        v.push(&self.recon);
        v
    }

    pub fn layers_mut(&mut self) -> Vec<&mut LayerParams> {
        let units = self.config.units;
        let mut v = vec![&mut self.init, &mut self.pool];
        let mut upf = self.up_fusion.iter_mut();
        let mut up = self.up.iter_mut();
        let mut dnf = self.down_fusion.iter_mut();
        let mut dn = self.down.iter_mut();
        for t in 0..units {
            v.extend(upf.next().expect("up fusion per unit").iter_mut());
            v.extend(up.next().expect("up unit").layers_mut());
            if t + 1 < units {
                v.extend(dnf.next().expect("down fusion per unit").iter_mut());
                v.push(dn.next().expect("down unit"));
            }
        }
        v.extend(self.recon_fusion.iter_mut());
        v.push(&mut self.recon);
        v
    }

    pub fn param_count(&self) -> usize {
        self.layers().iter().map(|l| l.param_count()).sum()
    }

    /// All parameters concatenated in declaration order.
    pub fn params_flat(&self) -> Vec<f64> {
        let mut out = Vec::with_capacity(self.param_count());
        for layer in self.layers() {
            for s in layer.param_slices() {
                out.extend_from_slice(s);
            }
        }
        out
    }

    pub fn set_params_flat(&mut self, values: &[f64]) -> Result<()> {
        if values.len() != self.param_count() {
            return param(format!("{} values for {} parameters", values.len(), self.param_count()));
        }
        let mut off = 0;
        for layer in self.layers_mut() {
            for s in layer.param_slices_mut() {
                s.copy_from_slice(&values[off..off + s.len()]);
                off += s.len();
            }
        }
        Ok(())
    }

    fn check_input(&self, lr: &Tensor4) -> Result<()> {
        if lr.channels() != self.config.n_l {
            return param(format!("network expects {} channel(s), got {}", self.config.n_l, lr.channels()));
        }
        lr.ensure_finite("network input")
    }

    fn bicubic_base(&self, lr: &Tensor4) -> Result<Tensor4> {
        let s = self.config.scale;
        let planes = (0..lr.batch())
            .map(|n| resize_bicubic(&lr.plane(n, 0), s as f64))
            .collect::<Result<Vec<_>>>()?;
        Tensor4::from_planes(&planes)
    }

    /// Unclipped forward pass that records everything the backward pass needs.
    pub fn forward_train(&self, lr: &Tensor4) -> Result<(Tensor4, ForwardTape)> {
        self.check_input(lr)?;
        let units = self.config.units;
        let (f0, init) = self.init.forward(lr)?;
        let (l0, pool) = self.pool.forward(&f0)?;
        let mut lr_maps = vec![l0];
        let mut hr_maps: Vec<Tensor4> = Vec::with_capacity(units);
        let (mut upf_c, mut up_c, mut dnf_c, mut dn_c) = (vec![], vec![], vec![], vec![]);
        for t in 0..units {
            let refs: Vec<&Tensor4> = lr_maps.iter().collect();
            let (fused, c) = sff_forward(&refs, &self.up_fusion[t])?;
            upf_c.push(c);
            let (h, c) = self.up[t].forward(&fused)?;
            up_c.push(c);
            hr_maps.push(h);
            if t + 1 < units {
                let refs: Vec<&Tensor4> = hr_maps.iter().collect();
                let (fused, c) = sff_forward(&refs, &self.down_fusion[t])?;
                dnf_c.push(c);
                let (l, c) = self.down[t].forward(&fused)?;
                dn_c.push(c);
                lr_maps.push(l);
            }
        }
        let refs: Vec<&Tensor4> = hr_maps.iter().collect();
        let (fused, recon_fusion) = sff_forward(&refs, &self.recon_fusion)?;
        let (detail, recon) = self.recon.forward(&fused)?;
        let out = detail.add(&self.bicubic_base(lr)?);
        let tape = ForwardTape {
            init,
            pool,
            lr_maps,
            hr_maps,
            up_fusion: upf_c,
            up: up_c,
            down_fusion: dnf_c,
            down: dn_c,
            recon_fusion,
            recon,
        };
        Ok((out, tape))
    }

    /// Unclipped inference.
    pub fn forward_unclipped(&self, lr: &Tensor4) -> Result<Tensor4> {
        self.forward_train(lr).map(|(out, _)| out)
    }

    /// Parameter gradients of a loss whose gradient with respect to the
    /// network output is `grad_out`.
    pub fn backward(&self, tape: &ForwardTape, grad_out: &Tensor4) -> Result<ErbpnModel> {
        let units = self.config.units;
        let mut g = self.zeros_like();
        let g_fused = self.recon.backward(&tape.recon, grad_out, &mut g.recon)?;
        let hr_refs: Vec<&Tensor4> = tape.hr_maps.iter().collect();
        let mut g_hr =
            sff_backward(&hr_refs, &self.recon_fusion, &tape.recon_fusion, &g_fused, &mut g.recon_fusion)?;
        let mut g_lr: Vec<Tensor4> = tape.lr_maps.iter().map(|m| Tensor4::zeros(m.dims())).collect();
        for t in (0..units).rev() {
            if t + 1 < units {
                let gf = self.down[t].backward(&tape.down[t], &g_lr[t + 1], &mut g.down[t])?;
                let refs = &hr_refs[..=t];
                let parts =
                    sff_backward(refs, &self.down_fusion[t], &tape.down_fusion[t], &gf, &mut g.down_fusion[t])?;
                for (acc, p) in g_hr.iter_mut().zip(&parts) {
                    acc.add_assign(p);
                }
            }
            let gf = self.up[t].backward(&tape.up[t], &g_hr[t], &mut g.up[t])?;
            let lr_refs: Vec<&Tensor4> = tape.lr_maps[..=t].iter().collect();
            let parts = sff_backward(&lr_refs, &self.up_fusion[t], &tape.up_fusion[t], &gf, &mut g.up_fusion[t])?;
            for (acc, p) in g_lr.iter_mut().zip(&parts) {
                acc.add_assign(p);
            }
        }
        let gf0 = self.pool.backward(&tape.pool, &g_lr[0], &mut g.pool)?;
        self.init.backward(&tape.init, &gf0, &mut g.init)?;
        Ok(g)
    }

    pub fn to_bytes(&self) -> Vec<u8> {
        let c = &self.config;
        let layers = self.layers();
        let mut out = Vec::with_capacity(64 + 8 * self.param_count());
        out.extend_from_slice(MAGIC);
        out.extend_from_slice(&FORMAT_VERSION.to_le_bytes());
        for v in [c.scale, c.units, c.n_f, c.n0, c.n_l, layers.len()] {
            out.extend_from_slice(&(v as u32).to_le_bytes());
        }
        for l in &layers {
            out.push(match l.kind {
                LayerKind::Conv => 0,
                LayerKind::Deconv => 1,
            });
            out.push(u8::from(l.slopes.is_some()));
            for v in [l.in_channels(), l.out_channels(), l.kernel(), l.stride, l.padding] {
                out.extend_from_slice(&(v as u32).to_le_bytes());
            }
        }
        for l in &layers {
            for s in l.param_slices() {
                for v in s {
                    out.extend_from_slice(&v.to_le_bytes());
                }
            }
        }
        out
    }

    pub fn from_bytes(bytes: &[u8]) -> Result<Self> {
        let bad = |msg: &str| Error::Config(format!("weight file: {msg}"));
        let mut r = Reader { bytes, pos: 0 };
        if r.take(8).ok_or_else(|| bad("truncated"))? != MAGIC {
            return Err(bad("bad magic"));
        }
        let version = r.u32().ok_or_else(|| bad("truncated"))?;
        if version != FORMAT_VERSION {
            return Err(bad(&format!("unsupported version {version}")));
        }
        let mut h = [0usize; 6];
        for v in &mut h {
            *v = r.u32().ok_or_else(|| bad("truncated header"))? as usize;
        }
        let config = ErbpnConfig { scale: h[0], units: h[1], n_f: h[2], n0: h[3], n_l: h[4] };
        let mut model = Self::zeros(config).map_err(|e| bad(&e.to_string()))?;
        if model.layers().len() != h[5] {
            return Err(bad("layer count does not match the architecture"));
        }
        for l in model.layers() {
            let kind = r.take(1).ok_or_else(|| bad("truncated layer table"))?[0];
            let act = r.take(1).ok_or_else(|| bad("truncated layer table"))?[0];
            let mut f = [0usize; 5];
            for v in &mut f {
                *v = r.u32().ok_or_else(|| bad("truncated layer table"))? as usize;
            }
            let expect_kind = match l.kind {
                LayerKind::Conv => 0,
                LayerKind::Deconv => 1,
            };
            let expected = [l.in_channels(), l.out_channels(), l.kernel(), l.stride, l.padding];
            if kind != expect_kind || act != u8::from(l.slopes.is_some()) || f != expected {
                return Err(bad("layer table does not match the architecture"));
            }
        }
        let n = model.param_count();
        let raw = r.take(8 * n).ok_or_else(|| bad("truncated parameters"))?;
        if r.pos != bytes.len() {
            return Err(bad("trailing bytes"));
        }
        let values: Vec<f64> =
            raw.chunks_exact(8).map(|c| f64::from_le_bytes(c.try_into().expect("8-byte chunk"))).collect();
        model.set_params_flat(&values)?;
        Ok(model)
    }

    pub fn save(&self, path: &Path) -> Result<()> {
        std::fs::write(path, self.to_bytes())?;
        Ok(())
    }

    pub fn load(path: &Path) -> Result<Self> {
        let bytes = std::fs::read(path)?;
        Self::from_bytes(&bytes).map_err(|e| match e {
            Error::Config(reason) => Error::Format { path: path.to_path_buf(), reason },
            other => other,
        })
    }
}

struct Reader<'a> {
    bytes: &'a [u8],
    pos: usize,
}

impl<'a> Reader<'a> {
    fn take(&mut self, n: usize) -> Option<&'a [u8]> {
        let s = self.bytes.get(self.pos..self.pos + n)?;
        self.pos += n;
        Some(s)
    }

    fn u32(&mut self) -> Option<u32> {
        self.take(4).map(|b| u32::from_le_bytes(b.try_into().expect("4-byte slice")))
    }
}

/// Super-resolves one plane, clipping the result to `[0, 1]`.
pub fn erbpn_forward(lr: &ImagePlane, model: &ErbpnModel) -> Result<ImagePlane> {
    Ok(erbpn_forward_unclipped(lr, model)?.clipped(0.0, 1.0))
}

pub fn erbpn_forward_unclipped(lr: &ImagePlane, model: &ErbpnModel) -> Result<ImagePlane> {
    lr.ensure_finite("network input")?;
    let out = model.forward_unclipped(&Tensor4::from_plane(lr))?;
    Ok(out.plane(0, 0))
}
