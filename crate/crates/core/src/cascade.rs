//! Two-stage pipelines combining the multi-frame solver and the network.
//!
//! MFSF fuses the sequence first and lets the network finish the job; SFMF
//! enhances every frame with the network and fuses the enhanced frames.

use std::path::{Path, PathBuf};

use rayon::prelude::*;

use crate::config::KeyValues;
use crate::degradation::{DegradationSpec, FrameSequence};
use crate::erbpn::{erbpn_forward, ErbpnModel};
use crate::error::{param, Error, Result};
use crate::imaging::ImagePlane;
use crate::lorig::{lorig_reconstruct, LorigConfig};

#[derive(Debug, Clone, Copy, PartialEq, Eq)]
pub enum CascadeOrder {
    /// Multi-frame stage first.
    Mfsf,
    /// Single-frame stage first.
    Sfmf,
}

impl std::str::FromStr for CascadeOrder {
    type Err = Error;
    fn from_str(s: &str) -> Result<Self> {
        match s.to_ascii_lowercase().as_str() {
            "mfsf" => Ok(CascadeOrder::Mfsf),
            "sfmf" => Ok(CascadeOrder::Sfmf),
            other => Err(Error::Config(format!("unknown cascade order `{other}`"))),
        }
    }
}

impl std::fmt::Display for CascadeOrder {
    fn fmt(&self, f: &mut std::fmt::Formatter<'_>) -> std::fmt::Result {
        f.write_str(match self {
            CascadeOrder::Mfsf => "mfsf",
            CascadeOrder::Sfmf => "sfmf",
        })
    }
}

#[derive(Debug, Clone, PartialEq)]
pub struct CascadePlan {
    pub order: CascadeOrder,
    pub stage1_scale: usize,
    pub stage2_scale: usize,
    pub lorig_cfg: LorigConfig,
    pub model: ErbpnModel,
}

/// Output of a cascade run with its work counters.
#[derive(Debug, Clone)]
pub struct CascadeResult {
    pub image: ImagePlane,
    /// Output of the first stage (the fused image, or the reference frame
    /// after enhancement).
    pub intermediate: ImagePlane,
    pub network_inferences: usize,
    pub reconstructions: usize,
}

impl CascadePlan {
    pub fn new(order: CascadeOrder, lorig_cfg: LorigConfig, model: ErbpnModel) -> Self {
        Self { order, stage1_scale: 2, stage2_scale: 2, lorig_cfg, model }
    }

    pub fn total_scale(&self) -> usize {
        self.stage1_scale * self.stage2_scale
    }

    /// Scale the network must have for this order.
    pub fn network_scale(&self) -> usize {
        match self.order {
            CascadeOrder::Mfsf => self.stage2_scale,
            CascadeOrder::Sfmf => self.stage1_scale,
        }
    }

    pub fn validate(&self, seq: &FrameSequence) -> Result<()> {
        if self.stage1_scale == 0 || self.stage2_scale == 0 {
            return param("stage scales must be positive");
        }
        if self.total_scale() != seq.spec.scale {
            return param(format!(
                "stage scales {}x{} do not multiply to the sequence scale {}",
                self.stage1_scale, self.stage2_scale, seq.spec.scale
            ));
        }
        if self.model.scale() != self.network_scale() {
            return param(format!(
                "network scale {} does not match its {} stage ({})",
                self.model.scale(),
                self.order,
                self.network_scale()
            ));
        }
        self.lorig_cfg.validate()
    }

    /// Reads `order`, `stage1_scale`, `stage2_scale`, and the `model` and
    /// optional `lorig_config` paths (relative to `base`).
    pub fn from_key_values(kv: &KeyValues, base: &Path) -> Result<Self> {
        let resolve = |p: String| -> PathBuf {
            let p = PathBuf::from(p);
            if p.is_absolute() {
                p
            } else {
                base.join(p)
            }
        };
        let order: CascadeOrder = kv.get_or("order", CascadeOrder::Mfsf)?;
        let model = ErbpnModel::load(&resolve(kv.require::<String>("model")?))?;
        let lorig_cfg = match kv.get::<String>("lorig_config")? {
            Some(p) => LorigConfig::from_key_values(&KeyValues::load(resolve(p))?)?,
            None => LorigConfig::from_key_values(kv)?,
        };
        Ok(Self {
            order,
            stage1_scale: kv.get_or("stage1_scale", 2)?,
            stage2_scale: kv.get_or("stage2_scale", 2)?,
            lorig_cfg,
            model,
        })
    }
}

/// Multi-frame reconstruction at `stage1_scale`, then the network.
pub fn mfsf_sr(seq: &FrameSequence, plan: &CascadePlan) -> Result<CascadeResult> {
    if plan.order != CascadeOrder::Mfsf {
        return param("plan order is not mfsf");
    }
    plan.validate(seq)?;
    let z = lorig_reconstruct(seq, &plan.lorig_cfg, plan.stage1_scale)?;
    let image = erbpn_forward(&z, &plan.model)?;
    Ok(CascadeResult { image, intermediate: z, network_inferences: 1, reconstructions: 1 })
}

/// Network on every frame at `stage1_scale`, then multi-frame
/// reconstruction at `stage2_scale`.
///
/// Motions are kept in HR pixels, so they carry over to the enhanced
/// sequence unchanged; only its scale drops to `stage2_scale`.
pub fn sfmf_sr(seq: &FrameSequence, plan: &CascadePlan) -> Result<CascadeResult> {
    if plan.order != CascadeOrder::Sfmf {
        return param("plan order is not sfmf");
    }
    plan.validate(seq)?;
    let frames = seq
        .frames
        .par_iter()
        .map(|f| erbpn_forward(f, &plan.model))
        .collect::<Result<Vec<_>>>()?;
    let enhanced = FrameSequence {
        frames,
        motions: seq.motions.clone(),
        spec: DegradationSpec { scale: plan.stage2_scale, ..seq.spec.clone() },
        reference_index: seq.reference_index,
    };
    let image = lorig_reconstruct(&enhanced, &plan.lorig_cfg, plan.stage2_scale)?;
    let intermediate = enhanced.frames[enhanced.reference_index].clone();
    Ok(CascadeResult { image, intermediate, network_inferences: seq.len(), reconstructions: 1 })
}

pub fn run_cascade(seq: &FrameSequence, plan: &CascadePlan) -> Result<CascadeResult> {
    match plan.order {
        CascadeOrder::Mfsf => mfsf_sr(seq, plan),
        CascadeOrder::Sfmf => sfmf_sr(seq, plan),
    }
}
