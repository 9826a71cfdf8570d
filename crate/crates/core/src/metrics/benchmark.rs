use std::path::{Path, PathBuf};

use rayon::prelude::*;

use super::report::{MetricsReport, MetricsRow};
use super::{psnr, ssim};
use crate::cascade::{run_cascade, CascadeOrder, CascadePlan};
use crate::config::KeyValues;
use crate::degradation::{derive_seed, simulate_sequence, Blur, DegradationSpec, FrameSequence, ShiftMode};
use crate::erbpn::{erbpn_forward, ErbpnModel};
use crate::error::{param, Error, Result};
use crate::imaging::{io, resample_bicubic, shift_subpixel, ImagePlane};
use crate::lorig::{lorig_reconstruct, LorigConfig};
use crate::registration::{register_sequence, RegistrationMode};
use crate::synthetic::textured_scene;

#[derive(Debug, Clone, Copy, PartialEq, Eq, PartialOrd, Ord)]
pub enum Method {
    Bicubic,
    Lorig,
    Erbpn,
    Mfsf,
    Sfmf,
}

impl Method {
    pub const ALL: [Method; 5] = [Method::Bicubic, Method::Lorig, Method::Erbpn, Method::Mfsf, Method::Sfmf];

    pub fn name(self) -> &'static str {
        match self {
            Method::Bicubic => "bicubic",
            Method::Lorig => "lorig",
            Method::Erbpn => "erbpn",
            Method::Mfsf => "mfsf",
            Method::Sfmf => "sfmf",
        }
    }
}

impl std::str::FromStr for Method {
    type Err = Error;
    fn from_str(s: &str) -> Result<Self> {
        Method::ALL
            .into_iter()
            .find(|m| m.name() == s)
            .ok_or_else(|| Error::Config(format!("unknown method `{s}`")))
    }
}

impl std::fmt::Display for Method {
    fn fmt(&self, f: &mut std::fmt::Formatter<'_>) -> std::fmt::Result {
        f.write_str(self.name())
    }
}

/// Ground-truth image, reduced to luminance.
#[derive(Debug, Clone, PartialEq)]
pub struct TestImage {
    pub id: String,
    pub image: ImagePlane,
}

impl TestImage {
    pub fn load(path: &Path) -> Result<Self> {
        let id = path.file_stem().map(|s| s.to_string_lossy().into_owned()).unwrap_or_else(|| "image".into());
        Ok(Self { id, image: io::load_gray(path)? })
    }
}

#[derive(Debug, Clone)]
pub struct BenchmarkSuite {
    pub images: Vec<TestImage>,
    pub scale: usize,
    pub blur: Blur,
    pub frames: usize,
    pub noise_variances: Vec<f64>,
    pub methods: Vec<Method>,
    pub seed: u64,
    pub registration: RegistrationMode,
    pub lorig_cfg: LorigConfig,
    pub stage1_scale: usize,
    /// Networks available to the methods, looked up by scale.
    pub models: Vec<ErbpnModel>,
    /// Extra `key = value` lines copied into the report header.
    pub notes: Vec<(String, String)>,
}

impl BenchmarkSuite {
    pub fn new(images: Vec<TestImage>, scale: usize) -> Self {
        Self {
            images,
            scale,
            blur: Blur::gaussian(1.5),
            frames: 16,
            noise_variances: vec![0.0],
            methods: vec![Method::Bicubic, Method::Lorig],
            seed: 0,
            registration: RegistrationMode::GroundTruth,
            lorig_cfg: LorigConfig::default(),
            stage1_scale: 2,
            models: Vec::new(),
            notes: Vec::new(),
        }
    }

    fn model(&self, scale: usize, method: Method) -> Result<&ErbpnModel> {
        self.models
            .iter()
            .find(|m| m.scale() == scale)
            .ok_or_else(|| Error::Config(format!("method {method} needs a {scale}x network")))
    }

    pub fn validate(&self) -> Result<()> {
        if self.scale == 0 || self.frames == 0 {
            return param("scale and frames must be positive");
        }
        if self.noise_variances.iter().any(|v| !(*v >= 0.0) || !v.is_finite()) {
            return param("noise variances must be finite and non-negative");
        }
        let needs_cascade = self.methods.iter().any(|m| matches!(m, Method::Mfsf | Method::Sfmf));
        if needs_cascade && (self.stage1_scale == 0 || self.scale % self.stage1_scale != 0) {
            return param(format!("stage1_scale {} does not divide {}", self.stage1_scale, self.scale));
        }
        for &m in &self.methods {
            match m {
                Method::Erbpn => drop(self.model(self.scale, m)?),
                Method::Mfsf => drop(self.model(self.scale / self.stage1_scale, m)?),
                Method::Sfmf => drop(self.model(self.stage1_scale, m)?),
                Method::Bicubic | Method::Lorig => {}
            }
        }
        self.lorig_cfg.validate()
    }

    /// Builds a suite from a config file.
    ///
    /// Keys: `images` (comma-separated paths) or `synthetic_count` and
    /// `synthetic_size`; `scale`, `frames`, `blur_sigma` (0 disables blur),
    /// `noise_variances`, `methods`, `seed`, `registration`,
    /// `stage1_scale`, `models` (comma-separated weight files), optional
    /// `lorig_config`, plus any solver keys. Paths are relative to `base`.
    pub fn from_key_values(kv: &KeyValues, base: &Path) -> Result<Self> {
        let resolve = |p: &str| -> PathBuf {
            let p = PathBuf::from(p.trim());
            if p.is_absolute() {
                p
            } else {
                base.join(p)
            }
        };
        let scale: usize = kv.get_or("scale", 4)?;
        let images = match kv.get_list::<String>("images")? {
            Some(paths) => paths.iter().map(|p| TestImage::load(&resolve(p))).collect::<Result<Vec<_>>>()?,
            None => {
                let count: usize = kv.get_or("synthetic_count", 2)?;
                let size: usize = kv.get_or("synthetic_size", 64)?;
                let seed: u64 = kv.get_or("synthetic_seed", 1)?;
                (0..count)
                    .map(|i| TestImage {
                        id: format!("synthetic_{i:02}"),
                        image: textured_scene(size, size, derive_seed(seed, i as u64)),
                    })
                    .collect()
            }
        };
        let mut suite = Self::new(images, scale);
        let sigma: f64 = kv.get_or("blur_sigma", 1.5)?;
        suite.blur = if sigma > 0.0 { Blur::gaussian(sigma) } else { Blur::Identity };
        suite.frames = kv.get_or("frames", suite.frames)?;
        if let Some(v) = kv.get_list("noise_variances")? {
            suite.noise_variances = v;
        }
        if let Some(m) = kv.get_list::<String>("methods")? {
            suite.methods = m.iter().filter(|s| !s.is_empty()).map(|s| s.parse()).collect::<Result<_>>()?;
        }
        suite.seed = kv.get_or("seed", 0)?;
        suite.registration = kv.get_or("registration", RegistrationMode::GroundTruth)?;
        suite.stage1_scale = kv.get_or("stage1_scale", 2)?;
        suite.lorig_cfg = match kv.get::<String>("lorig_config")? {
            Some(p) => LorigConfig::from_key_values(&KeyValues::load(resolve(&p))?)?,
            None => LorigConfig::from_key_values(kv)?,
        };
        if let Some(paths) = kv.get_list::<String>("models")? {
            suite.models =
                paths.iter().filter(|p| !p.is_empty()).map(|p| ErbpnModel::load(&resolve(p))).collect::<Result<_>>()?;
        }
        if let Some(t) = kv.get_str("training_data") {
            suite.notes.push(("training_data".into(), t.to_string()));
        }
        Ok(suite)
    }

    fn metadata(&self) -> Vec<(String, String)> {
        let blur = match &self.blur {
            Blur::Identity => "identity".to_string(),
            Blur::Gaussian { sigma, radius } => format!("gaussian(sigma={sigma}, radius={radius})"),
            Blur::Custom(k) => format!("custom({}x{})", k.side(), k.side()),
        };
        let mut md = vec![
            ("scale".to_string(), self.scale.to_string()),
            ("frames".to_string(), self.frames.to_string()),
            ("blur".to_string(), blur),
            ("seed".to_string(), self.seed.to_string()),
            (
                "registration".to_string(),
                match self.registration {
                    RegistrationMode::Estimate => "estimate",
                    RegistrationMode::GroundTruth => "ground_truth",
                }
                .to_string(),
            ),
            ("lambda".to_string(), self.lorig_cfg.lambda.to_string()),
            ("stage_scales".to_string(), format!("{}x{}", self.stage1_scale, self.scale / self.stage1_scale.max(1))),
        ];
        md.extend(self.notes.iter().cloned());
        md
    }
}

fn score(
    row: (&str, Method, usize, f64),
    reference: &ImagePlane,
    test: &ImagePlane,
) -> Result<MetricsRow> {
    Ok(MetricsRow {
        image: row.0.to_string(),
        method: row.1.name().to_string(),
        scale: row.2,
        noise_variance: row.3,
        psnr_db: psnr(reference, test, 1.0)?,
        ssim: ssim(reference, test)?,
    })
}

/// Bicubic upsampling of the reference frame, compensated for its motion.
pub fn aligned_bicubic(seq: &FrameSequence, hr_dims: (usize, usize)) -> Result<ImagePlane> {
    let m = seq.motions[seq.reference_index];
    Ok(resample_bicubic(seq.reference(), hr_dims.0, hr_dims.1, seq.spec.scale as f64, m.dy, m.dx)?.clipped(0.0, 1.0))
}

fn run_method(suite: &BenchmarkSuite, method: Method, seq: &FrameSequence, hr: &ImagePlane) -> Result<ImagePlane> {
    let s = suite.scale;
    match method {
        Method::Bicubic => aligned_bicubic(seq, hr.dims()),
        Method::Lorig => lorig_reconstruct(seq, &suite.lorig_cfg, s),
        Method::Erbpn => {
            // the network sees the reference frame only; undo its motion on
            // the HR grid
            let out = erbpn_forward(seq.reference(), suite.model(s, method)?)?;
            let m = seq.motions[seq.reference_index];
            Ok(shift_subpixel(&out, -m.dx, -m.dy))
        }
        Method::Mfsf | Method::Sfmf => {
            let (order, net_scale) = if method == Method::Mfsf {
                (CascadeOrder::Mfsf, s / suite.stage1_scale)
            } else {
                (CascadeOrder::Sfmf, suite.stage1_scale)
            };
            let plan = CascadePlan {
                order,
                stage1_scale: suite.stage1_scale,
                stage2_scale: s / suite.stage1_scale,
                lorig_cfg: suite.lorig_cfg.clone(),
                model: suite.model(net_scale, method)?.clone(),
            };
            Ok(run_cascade(seq, &plan)?.image)
        }
    }
}

fn run_cell(suite: &BenchmarkSuite, image_index: usize, noise_index: usize) -> Result<Vec<MetricsRow>> {
    let img = &suite.images[image_index];
    let noise = suite.noise_variances[noise_index];
    let (h, w) = img.image.dims();
    let s = suite.scale;
    let hr = img.image.crop(0, 0, h - h % s, w - w % s)?;
    let cell = (image_index * suite.noise_variances.len() + noise_index) as u64;
    let spec = DegradationSpec::new(s, suite.blur.clone(), noise, derive_seed(suite.seed, cell))?;
    let seq = simulate_sequence(&hr, &spec, suite.frames, ShiftMode::Grid)?;
    let seq = register_sequence(&seq, suite.registration)?;
    suite
        .methods
        .iter()
        .map(|&m| {
            let out = run_method(suite, m, &seq, &hr)?;
            score((&img.id, m, s, noise), &hr, &out)
        })
        .collect()
}

/// Simulates, reconstructs and scores every (image, noise level) cell.
///
/// Cells run in parallel on the current rayon pool; the report is sorted by
/// image, method and noise level, so it does not depend on scheduling.
pub fn benchmark(suite: &BenchmarkSuite) -> Result<MetricsReport> {
    suite.validate()?;
    let mut report = MetricsReport { metadata: suite.metadata(), rows: Vec::new() };
    if suite.methods.is_empty() {
        return Ok(report);
    }
    let cells: Vec<(usize, usize)> = (0..suite.images.len())
        .flat_map(|i| (0..suite.noise_variances.len()).map(move |n| (i, n)))
        .collect();
    let results: Vec<Result<Vec<MetricsRow>>> = cells.par_iter().map(|&(i, n)| run_cell(suite, i, n)).collect();
    for r in results {
        report.rows.extend(r?);
    }
    report.sort();
    Ok(report)
}
