use std::io::Write;
use std::path::{Path, PathBuf};

use rand::seq::SliceRandom;
use rand::{Rng, SeedableRng};
use rand_chacha::ChaCha8Rng;
use rayon::prelude::*;

use super::adam::{adam_step, AdamState};
use super::model::{ErbpnConfig, ErbpnModel};
use super::tensor::Tensor4;
use crate::config::KeyValues;
use crate::degradation::{derive_seed, simulate_sequence, DegradationSpec, ShiftMode};
use crate::error::{param, Error, Result};
use crate::imaging::{resize_bicubic, ImagePlane};
use crate::lorig::{lorig_reconstruct, LorigConfig};

/// `(1/N) Σ_i ‖pred_i − target_i‖²` over the batch, and its gradient.
pub fn mse_loss(pred: &Tensor4, target: &Tensor4) -> Result<(f64, Tensor4)> {
    if pred.dims() != target.dims() {
        return param(format!("prediction {:?} and target {:?} differ", pred.dims(), target.dims()));
    }
    let n = pred.batch() as f64;
    let diff = pred.sub(target);
    let loss = diff.dot(&diff) / n;
    let mut grad = diff;
    grad.data_mut().iter_mut().for_each(|v| *v *= 2.0 / n);
    Ok((loss, grad))
}

/// One of the eight rotations/flips of the square: `code % 4` quarter turns
/// counter-clockwise, then a horizontal flip if `code >= 4`.
pub fn augment(img: &ImagePlane, code: u8) -> ImagePlane {
    let mut out = img.clone();
    for _ in 0..code % 4 {
        let (h, w) = out.dims();
        let src = out;
        out = ImagePlane::from_fn(w, h, |y, x| src.get(x, w - 1 - y));
    }
    if code >= 4 {
        let w = out.width();
        let src = out;
        out = ImagePlane::from_fn(src.height(), w, |y, x| src.get(y, w - 1 - x));
    }
    out
}

#[derive(Debug, Clone, PartialEq)]
pub struct TrainingPair {
    pub lr: ImagePlane,
    pub hr: ImagePlane,
}

/// Training data source for the network stage of the cascade.
#[derive(Debug, Clone, Copy, PartialEq, Eq)]
pub enum TrainingData {
    /// Bicubically downscaled ground truth.
    Bicubic,
    /// Multi-frame reconstructions paired with the ground truth.
    Lorig,
}

impl std::str::FromStr for TrainingData {
    type Err = Error;
    fn from_str(s: &str) -> Result<Self> {
        match s {
            "bicubic" => Ok(TrainingData::Bicubic),
            "lorig" => Ok(TrainingData::Lorig),
            other => Err(Error::Config(format!("unknown training data mode `{other}`"))),
        }
    }
}

impl std::fmt::Display for TrainingData {
    fn fmt(&self, f: &mut std::fmt::Formatter<'_>) -> std::fmt::Result {
        f.write_str(match self {
            TrainingData::Bicubic => "bicubic",
            TrainingData::Lorig => "lorig",
        })
    }
}

/// Random aligned crops of `count` patches (HR side `patch`) from a full pair.
pub fn crop_pairs<R: Rng>(
    lr: &ImagePlane,
    hr: &ImagePlane,
    scale: usize,
    patch: usize,
    count: usize,
    rng: &mut R,
) -> Result<Vec<TrainingPair>> {
    if patch == 0 || patch % scale != 0 {
        return param(format!("patch size {patch} is not a positive multiple of scale {scale}"));
    }
    let lp = patch / scale;
    let (lh, lw) = lr.dims();
    if hr.dims() != (lh * scale, lw * scale) {
        return param("HR image is not the scaled LR image size");
    }
    if lh < lp || lw < lp {
        return param(format!("image {lh}x{lw} is smaller than the LR patch {lp}"));
    }
    (0..count)
        .map(|_| {
            let y = rng.random_range(0..=lh - lp);
            let x = rng.random_range(0..=lw - lp);
            Ok(TrainingPair { lr: lr.crop(y, x, lp, lp)?, hr: hr.crop(y * scale, x * scale, patch, patch)? })
        })
        .collect()
}

fn trim_to_multiple(img: &ImagePlane, m: usize) -> Result<ImagePlane> {
    let (h, w) = img.dims();
    img.crop(0, 0, h - h % m, w - w % m)
}

/// Patches of bicubically downscaled images paired with the originals.
pub fn bicubic_pairs(
    images: &[ImagePlane],
    scale: usize,
    patch: usize,
    per_image: usize,
    seed: u64,
) -> Result<Vec<TrainingPair>> {
    let mut out = Vec::new();
    for (i, img) in images.iter().enumerate() {
        let hr = trim_to_multiple(img, scale)?;
        let lr = resize_bicubic(&hr, 1.0 / scale as f64)?;
        let mut rng = ChaCha8Rng::seed_from_u64(derive_seed(seed, i as u64));
        out.extend(crop_pairs(&lr, &hr, scale, patch, per_image, &mut rng)?);
    }
    Ok(out)
}

/// Patches of multi-frame reconstructions paired with the originals.
///
/// Each image is degraded into a `frames`-long sequence under `spec`, then
/// reconstructed at `lorig_scale`; the network learns the remaining
/// `spec.scale / lorig_scale` factor.
#[allow(clippy::too_many_arguments)]
pub fn lorig_pairs(
    images: &[ImagePlane],
    spec: &DegradationSpec,
    frames: usize,
    lorig_scale: usize,
    cfg: &LorigConfig,
    patch: usize,
    per_image: usize,
    seed: u64,
) -> Result<Vec<TrainingPair>> {
    if lorig_scale == 0 || spec.scale % lorig_scale != 0 {
        return param(format!("reconstruction scale {lorig_scale} does not divide {}", spec.scale));
    }
    let net_scale = spec.scale / lorig_scale;
    let mut out = Vec::new();
    for (i, img) in images.iter().enumerate() {
        let hr = trim_to_multiple(img, spec.scale)?;
        let s = DegradationSpec { seed: derive_seed(seed, 2 * i as u64), ..spec.clone() };
        let seq = simulate_sequence(&hr, &s, frames, ShiftMode::Grid)?;
        let z = lorig_reconstruct(&seq, cfg, lorig_scale)?;
        let mut rng = ChaCha8Rng::seed_from_u64(derive_seed(seed, 2 * i as u64 + 1));
        out.extend(crop_pairs(&z, &hr, net_scale, patch, per_image, &mut rng)?);
    }
    Ok(out)
}

#[derive(Debug, Clone, PartialEq)]
pub struct TrainConfig {
    pub network: ErbpnConfig,
    pub epochs: usize,
    pub batch_size: usize,
    pub patch_size: usize,
    pub learning_rate: f64,
    pub halve_every: usize,
    pub augment: bool,
    pub seed: u64,
    pub checkpoint_dir: Option<PathBuf>,
}

impl Default for TrainConfig {
    fn default() -> Self {
        Self {
            network: ErbpnConfig::default(),
            epochs: 10,
            batch_size: 8,
            patch_size: 32,
            learning_rate: 1e-4,
            halve_every: 100,
            augment: true,
            seed: 0,
            checkpoint_dir: None,
        }
    }
}

impl TrainConfig {
    pub fn from_key_values(kv: &KeyValues) -> Result<Self> {
        let d = Self::default();
        let n = d.network;
        Ok(Self {
            network: ErbpnConfig {
                scale: kv.get_or("scale", n.scale)?,
                units: kv.get_or("units", n.units)?,
                n_f: kv.get_or("n_f", n.n_f)?,
                n0: kv.get_or("n0", n.n0)?,
                n_l: 1,
            },
            epochs: kv.get_or("epochs", d.epochs)?,
            batch_size: kv.get_or("batch_size", d.batch_size)?,
            patch_size: kv.get_or("patch_size", d.patch_size)?,
            learning_rate: kv.get_or("learning_rate", d.learning_rate)?,
            halve_every: kv.get_or("halve_every", d.halve_every)?,
            augment: kv.get_or("augment", d.augment)?,
            seed: kv.get_or("seed", d.seed)?,
            checkpoint_dir: kv.get::<String>("checkpoint_dir")?.map(PathBuf::from),
        })
    }

    pub fn validate(&self) -> Result<()> {
        self.network.validate()?;
        if self.epochs == 0 || self.batch_size == 0 {
            return param("epochs and batch_size must be positive");
        }
        if !(self.learning_rate > 0.0 && self.learning_rate.is_finite()) {
            return param("learning_rate must be positive");
        }
        if self.patch_size % self.network.scale != 0 {
            return param("patch_size must be a multiple of the scale");
        }
        Ok(())
    }
}

#[derive(Debug, Clone, Copy, PartialEq)]
pub struct LossRecord {
    pub step: usize,
    pub epoch: usize,
    pub learning_rate: f64,
    /// Batch loss before the update of this step.
    pub loss: f64,
}

#[derive(Debug, Clone)]
pub struct TrainOutcome {
    pub model: ErbpnModel,
    pub losses: Vec<LossRecord>,
}

pub fn loss_curve_csv(losses: &[LossRecord]) -> String {
    let mut s = String::from("step,epoch,learning_rate,loss\n");
    for r in losses {
        s.push_str(&format!("{},{},{:e},{:.17e}\n", r.step, r.epoch, r.learning_rate, r.loss));
    }
    s
}

pub fn write_loss_curve(path: impl AsRef<Path>, losses: &[LossRecord]) -> Result<()> {
    let mut f = std::fs::File::create(path)?;
    f.write_all(loss_curve_csv(losses).as_bytes())?;
    Ok(())
}

/// Loss and flat gradient of one sample, with the batch normalization `n`.
fn sample_gradient(model: &ErbpnModel, lr: &ImagePlane, hr: &ImagePlane, n: usize) -> Result<(f64, Vec<f64>)> {
    let (pred, tape) = model.forward_train(&Tensor4::from_plane(lr))?;
    let target = Tensor4::from_plane(hr);
    let (loss, mut grad) = mse_loss(&pred, &target)?;
    let k = 1.0 / n as f64;
    grad.data_mut().iter_mut().for_each(|v| *v *= k);
    let g = model.backward(&tape, &grad)?;
    Ok((loss * k, g.params_flat()))
}

/// Trains a freshly initialized network.
pub fn train(dataset: &[TrainingPair], cfg: &TrainConfig) -> Result<TrainOutcome> {
    cfg.validate()?;
    let model = ErbpnModel::new(cfg.network, derive_seed(cfg.seed, 0))?;
    train_from(model, dataset, cfg)
}

/// Continues training `model`; `cfg.network` is ignored.
pub fn train_from(mut model: ErbpnModel, dataset: &[TrainingPair], cfg: &TrainConfig) -> Result<TrainOutcome> {
    if dataset.is_empty() {
        return param("training set is empty");
    }
    let s = model.scale();
    for p in dataset {
        let (h, w) = p.lr.dims();
        if p.hr.dims() != (h * s, w * s) {
            return param(format!("training pair {h}x{w} -> {:?} does not match scale {s}", p.hr.dims()));
        }
    }
    if cfg.epochs == 0 || cfg.batch_size == 0 {
        return param("epochs and batch_size must be positive");
    }
    let mut adam = AdamState::new(model.param_count(), cfg.learning_rate);
    adam.halve_every = cfg.halve_every;
    let mut rng = ChaCha8Rng::seed_from_u64(derive_seed(cfg.seed, 1));
    let mut order: Vec<usize> = (0..dataset.len()).collect();
    let mut losses = Vec::new();
    let mut step = 0;
    if let Some(dir) = &cfg.checkpoint_dir {
        std::fs::create_dir_all(dir)?;
    }
    for epoch in 0..cfg.epochs {
        order.shuffle(&mut rng);
        for chunk in order.chunks(cfg.batch_size) {
            let batch: Vec<(ImagePlane, ImagePlane)> = chunk
                .iter()
                .map(|&i| {
                    let p = &dataset[i];
                    if cfg.augment {
                        let code = rng.random_range(0..8u8);
                        (augment(&p.lr, code), augment(&p.hr, code))
                    } else {
                        (p.lr.clone(), p.hr.clone())
                    }
                })
                .collect();
            let n = batch.len();
            let results: Vec<Result<(f64, Vec<f64>)>> =
                batch.par_iter().map(|(lr, hr)| sample_gradient(&model, lr, hr, n)).collect();
            let mut loss = 0.0;
            let mut grad = vec![0.0; model.param_count()];
            for r in results {
                let (l, g) = r?;
                loss += l;
                grad.iter_mut().zip(&g).for_each(|(a, b)| *a += b);
            }
            if !loss.is_finite() {
                return Err(Error::Numeric(format!("training loss diverged at step {step}")));
            }
            losses.push(LossRecord { step, epoch, learning_rate: adam.learning_rate_at(epoch), loss });
            let mut params = model.params_flat();
            adam_step(&mut params, &grad, &mut adam, epoch)?;
            model.set_params_flat(&params)?;
            step += 1;
        }
        if let Some(dir) = &cfg.checkpoint_dir {
            model.save(&dir.join(format!("epoch_{:04}.erbpn", epoch + 1)))?;
        }
    }
    Ok(TrainOutcome { model, losses })
}
