//! Observation model `g_k = D·B·M_k·z + n` and synthetic sequence generation.

use std::path::Path;

use rand::SeedableRng;
use rand_chacha::ChaCha8Rng;
use rand_distr::{Distribution, Normal};

use crate::config::KeyValues;
use crate::error::{param, Error, Result};
use crate::imaging::{
    convolve_circular, correlate_circular, decimate, io, shift_subpixel, shift_subpixel_adjoint,
    upsample_zero, ImagePlane, Kernel2D,
};

/// Spatially invariant blur of the observation model.
#[derive(Debug, Clone, PartialEq)]
pub enum Blur {
    Identity,
    Gaussian { sigma: f64, radius: usize },
    Custom(Kernel2D),
}

impl Blur {
    /// Gaussian with the default radius `ceil(3σ)`.
    pub fn gaussian(sigma: f64) -> Self {
        Blur::Gaussian { sigma, radius: ((3.0 * sigma).ceil() as usize).max(1) }
    }

    pub fn kernel(&self) -> Result<Kernel2D> {
        match self {
            Blur::Identity => Ok(Kernel2D::delta()),
            Blur::Gaussian { sigma, radius } => Kernel2D::gaussian(*sigma, *radius),
            Blur::Custom(k) => Ok(k.clone()),
        }
    }

    /// The same physical blur expressed on a grid `factor` times coarser.
    pub fn coarsened(&self, factor: usize) -> Result<Blur> {
        if factor == 0 {
            return param("grid factor must be at least 1");
        }
        if factor == 1 {
            return Ok(self.clone());
        }
        match self {
            Blur::Identity => Ok(Blur::Identity),
            Blur::Gaussian { sigma, radius } => Ok(Blur::Gaussian {
                sigma: sigma / factor as f64,
                radius: radius.div_ceil(factor).max(1),
            }),
            Blur::Custom(_) => param("a custom blur kernel cannot be moved to a coarser grid"),
        }
    }
}

/// Decimation factor, blur, noise level and seed shared by every frame.
#[derive(Debug, Clone, PartialEq)]
pub struct DegradationSpec {
    pub scale: usize,
    pub blur: Blur,
    /// Variance on the `[0, 1]` intensity scale.
    pub noise_variance: f64,
    pub seed: u64,
}

impl DegradationSpec {
    pub fn new(scale: usize, blur: Blur, noise_variance: f64, seed: u64) -> Result<Self> {
        let spec = Self { scale, blur, noise_variance, seed };
        spec.validate()?;
        Ok(spec)
    }

    pub fn validate(&self) -> Result<()> {
        if self.scale < 1 {
            return param("scale must be at least 1");
        }
        if !(self.noise_variance >= 0.0) || !self.noise_variance.is_finite() {
            return param(format!("noise variance must be >= 0, got {}", self.noise_variance));
        }
        self.blur.kernel().map(|_| ())
    }

    /// No blur, no decimation, no noise.
    pub fn identity() -> Self {
        Self { scale: 1, blur: Blur::Identity, noise_variance: 0.0, seed: 0 }
    }
}

/// Translation of one frame, in pixels of the grid the operator acts on.
#[derive(Debug, Clone, Copy, PartialEq, Default)]
pub struct Motion {
    pub dx: f64,
    pub dy: f64,
}

impl Motion {
    pub const ZERO: Motion = Motion { dx: 0.0, dy: 0.0 };

    pub fn new(dx: f64, dy: f64) -> Self {
        Self { dx, dy }
    }

    pub fn scaled(self, f: f64) -> Self {
        Self { dx: self.dx * f, dy: self.dy * f }
    }
}

/// Observed low-resolution frames with their motions (in HR pixels).
#[derive(Debug, Clone, PartialEq)]
pub struct FrameSequence {
    pub frames: Vec<ImagePlane>,
    pub motions: Vec<Motion>,
    pub spec: DegradationSpec,
    pub reference_index: usize,
}

impl FrameSequence {
    pub fn new(
        frames: Vec<ImagePlane>,
        motions: Vec<Motion>,
        spec: DegradationSpec,
        reference_index: usize,
    ) -> Result<Self> {
        let seq = Self { frames, motions, spec, reference_index };
        seq.validate()?;
        Ok(seq)
    }

    pub fn validate(&self) -> Result<()> {
        if self.frames.is_empty() {
            return param("frame sequence is empty");
        }
        if self.frames.len() != self.motions.len() {
            return param(format!(
                "{} frames but {} motions",
                self.frames.len(),
                self.motions.len()
            ));
        }
        let dims = self.frames[0].dims();
        if self.frames.iter().any(|f| f.dims() != dims) {
            return param("frames do not share dimensions");
        }
        if self.reference_index >= self.frames.len() {
            return param(format!(
                "reference index {} out of range for {} frames",
                self.reference_index,
                self.frames.len()
            ));
        }
        self.spec.validate()
    }

    pub fn len(&self) -> usize {
        self.frames.len()
    }

    pub fn is_empty(&self) -> bool {
        self.frames.is_empty()
    }

    pub fn lr_dims(&self) -> (usize, usize) {
        self.frames[0].dims()
    }

    pub fn reference(&self) -> &ImagePlane {
        &self.frames[self.reference_index]
    }
}

/// How simulated frames are displaced.
#[derive(Debug, Clone, Copy, PartialEq, Eq)]
pub enum ShiftMode {
    /// Regular lattice of `ceil(√count)²` positions covering one LR pixel.
    Grid,
    /// Seeded uniform shifts in `[0, scale)` HR pixels.
    Random,
}

impl std::str::FromStr for ShiftMode {
    type Err = Error;
    fn from_str(s: &str) -> Result<Self> {
        match s {
            "grid" => Ok(ShiftMode::Grid),
            "random" => Ok(ShiftMode::Random),
            other => Err(Error::Config(format!("unknown shift mode `{other}`"))),
        }
    }
}

/// The linear map `W = D·B·M` for one motion, with its transpose.
#[derive(Debug, Clone)]
pub struct ObservationOperator {
    pub scale: usize,
    pub kernel: Kernel2D,
}

impl ObservationOperator {
    pub fn new(scale: usize, blur: &Blur) -> Result<Self> {
        if scale < 1 {
            return param("scale must be at least 1");
        }
        Ok(Self { scale, kernel: blur.kernel()? })
    }

    pub fn from_spec(spec: &DegradationSpec) -> Result<Self> {
        Self::new(spec.scale, &spec.blur)
    }

    pub fn apply(&self, z: &ImagePlane, motion: Motion) -> Result<ImagePlane> {
        let shifted = shift_subpixel(z, motion.dx, motion.dy);
        let blurred = convolve_circular(&shifted, &self.kernel)?;
        decimate(&blurred, self.scale)
    }

    pub fn apply_adjoint(&self, g: &ImagePlane, motion: Motion) -> Result<ImagePlane> {
        let up = upsample_zero(g, self.scale)?;
        let blurred = correlate_circular(&up, &self.kernel)?;
        Ok(shift_subpixel_adjoint(&blurred, motion.dx, motion.dy))
    }
}

/// `W_k z` for the given motion and degradation.
pub fn apply_w(z: &ImagePlane, motion: Motion, spec: &DegradationSpec) -> Result<ImagePlane> {
    ObservationOperator::from_spec(spec)?.apply(z, motion)
}

/// `W_kᵀ g`, the exact transpose of [`apply_w`].
pub fn apply_w_adjoint(g: &ImagePlane, motion: Motion, spec: &DegradationSpec) -> Result<ImagePlane> {
    ObservationOperator::from_spec(spec)?.apply_adjoint(g, motion)
}

fn splitmix64(mut x: u64) -> u64 {
    x = x.wrapping_add(0x9E37_79B9_7F4A_7C15);
    x = (x ^ (x >> 30)).wrapping_mul(0xBF58_476D_1CE4_E5B9);
    x = (x ^ (x >> 27)).wrapping_mul(0x94D0_49BB_1331_11EB);
    x ^ (x >> 31)
}

/// Independent seed for stream `index` of a run seeded with `seed`.
pub fn derive_seed(seed: u64, index: u64) -> u64 {
    splitmix64(seed ^ splitmix64(index.wrapping_add(1)))
}

/// Adds i.i.d. zero-mean Gaussian noise of the given variance.
pub fn add_awgn(img: &ImagePlane, variance: f64, seed: u64) -> Result<ImagePlane> {
    if !(variance >= 0.0) || !variance.is_finite() {
        return param(format!("noise variance must be >= 0, got {variance}"));
    }
    if variance == 0.0 {
        return Ok(img.clone());
    }
    let normal = Normal::new(0.0, variance.sqrt()).map_err(|e| Error::Parameter(e.to_string()))?;
    let mut rng = ChaCha8Rng::seed_from_u64(seed);
    let mut out = img.clone();
    for v in out.data_mut() {
        *v += normal.sample(&mut rng);
    }
    Ok(out)
}

/// Shifts (in HR pixels) used by [`simulate_sequence`].
pub fn frame_motions(count: usize, scale: usize, mode: ShiftMode, seed: u64) -> Vec<Motion> {
    match mode {
        ShiftMode::Grid => {
            let n = (count as f64).sqrt().ceil().max(1.0) as usize;
            let step = scale as f64 / n as f64;
            (0..count)
                .map(|k| Motion::new((k % n) as f64 * step, (k / n) as f64 * step))
                .collect()
        }
        ShiftMode::Random => {
            use rand::Rng;
            let mut rng = ChaCha8Rng::seed_from_u64(derive_seed(seed, u64::MAX));
            (0..count)
                .map(|_| {
                    let dx = rng.random_range(0.0..scale as f64);
                    let dy = rng.random_range(0.0..scale as f64);
                    Motion::new(dx, dy)
                })
                .collect()
        }
    }
}

/// Generates `count` observations of `hr`: shift, blur, decimate, add noise.
///
/// Noise for frame `k` comes from its own stream derived from
/// `(spec.seed, k)`, so frames can be produced in any order.
pub fn simulate_sequence(
    hr: &ImagePlane,
    spec: &DegradationSpec,
    count: usize,
    mode: ShiftMode,
) -> Result<FrameSequence> {
    spec.validate()?;
    if count == 0 {
        return param("frame count must be at least 1");
    }
    let (h, w) = hr.dims();
    if h % spec.scale != 0 || w % spec.scale != 0 {
        return param(format!("{h}x{w} image is not divisible by scale {}", spec.scale));
    }
    hr.ensure_finite("high-resolution image")?;
    let op = ObservationOperator::from_spec(spec)?;
    let motions = frame_motions(count, spec.scale, mode, spec.seed);
    let frames = motions
        .iter()
        .enumerate()
        .map(|(k, &m)| {
            let clean = op.apply(hr, m)?;
            add_awgn(&clean, spec.noise_variance, derive_seed(spec.seed, k as u64))
        })
        .collect::<Result<Vec<_>>>()?;
    FrameSequence::new(frames, motions, spec.clone(), count / 2)
}

const MANIFEST: &str = "manifest.txt";
const MANIFEST_FORMAT: &str = "srcascade-sequence-1";

fn frame_name(k: usize) -> String {
    format!("frame_{k:03}.png")
}

/// Writes frames as 8-bit PNGs plus `manifest.txt`.
pub fn save_sequence(dir: impl AsRef<Path>, seq: &FrameSequence) -> Result<()> {
    let dir = dir.as_ref();
    std::fs::create_dir_all(dir)?;
    let mut kv = KeyValues::new();
    kv.set("format", MANIFEST_FORMAT);
    kv.set("scale", seq.spec.scale);
    match &seq.spec.blur {
        Blur::Identity => kv.set("blur", "identity"),
        Blur::Gaussian { sigma, radius } => {
            kv.set("blur", "gaussian");
            kv.set("blur_sigma", sigma);
            kv.set("blur_radius", radius);
        }
        Blur::Custom(k) => {
            kv.set("blur", "custom");
            kv.set("blur_radius", k.radius());
            let w: Vec<String> = k.weights().iter().map(|v| v.to_string()).collect();
            kv.set("blur_weights", w.join(","));
        }
    }
    kv.set("noise_variance", seq.spec.noise_variance);
    kv.set("seed", seq.spec.seed);
    kv.set("frame_count", seq.len());
    kv.set("reference_index", seq.reference_index);
    for (k, (frame, m)) in seq.frames.iter().zip(&seq.motions).enumerate() {
        let name = frame_name(k);
        io::save_gray(dir.join(&name), frame)?;
        kv.set(&format!("frame.{k}"), format!("{name} {} {}", m.dx, m.dy));
    }
    kv.save(dir.join(MANIFEST))
}

fn parse_blur(kv: &KeyValues) -> Result<Blur> {
    let kind: String = kv.get_or("blur", "gaussian".to_string())?;
    match kind.as_str() {
        "identity" => Ok(Blur::Identity),
        "gaussian" => Ok(Blur::Gaussian {
            sigma: kv.require("blur_sigma")?,
            radius: kv.require("blur_radius")?,
        }),
        "custom" => {
            let radius: usize = kv.require("blur_radius")?;
            let w: Vec<f64> = kv
                .get_list("blur_weights")?
                .ok_or_else(|| Error::Config("missing key `blur_weights`".into()))?;
            Ok(Blur::Custom(Kernel2D::from_weights(radius, w)?))
        }
        other => Err(Error::Config(format!("unknown blur kind `{other}`"))),
    }
}

/// Reads a directory written by [`save_sequence`].
pub fn load_sequence(dir: impl AsRef<Path>) -> Result<FrameSequence> {
    let dir = dir.as_ref();
    let manifest = dir.join(MANIFEST);
    let kv = KeyValues::load(&manifest)?;
    let bad = |reason: String| Error::Format { path: manifest.clone(), reason };
    if kv.get_str("format") != Some(MANIFEST_FORMAT) {
        return Err(bad(format!("expected format = {MANIFEST_FORMAT}")));
    }
    let spec = DegradationSpec {
        scale: kv.require("scale")?,
        blur: parse_blur(&kv)?,
        noise_variance: kv.get_or("noise_variance", 0.0)?,
        seed: kv.get_or("seed", 0)?,
    };
    let count: usize = kv.require("frame_count")?;
    let mut frames = Vec::with_capacity(count);
    let mut motions = Vec::with_capacity(count);
    for k in 0..count {
        let entry = kv
            .get_str(&format!("frame.{k}"))
            .ok_or_else(|| bad(format!("missing frame.{k}")))?;
        let parts: Vec<&str> = entry.split_whitespace().collect();
        if parts.len() != 3 {
            return Err(bad(format!("frame.{k} must be `file dx dy`")));
        }
        let dx: f64 = parts[1].parse().map_err(|_| bad(format!("frame.{k}: bad dx")))?;
        let dy: f64 = parts[2].parse().map_err(|_| bad(format!("frame.{k}: bad dy")))?;
        frames.push(io::load_gray(dir.join(parts[0]))?);
        motions.push(Motion::new(dx, dy));
    }
    FrameSequence::new(frames, motions, spec, kv.require("reference_index")?)
}
