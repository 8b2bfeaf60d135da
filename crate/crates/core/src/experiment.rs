//! Rate-distortion experiments: ablation arms and quantization-step sweeps.
//!
//! Arms that differ only in loss settings that take effect at the entropy
//! start share every earlier iteration, so the common prefix is trained once
//! and forked.

use crate::error::{Error, Result};
use crate::framecodec::{
    decode_frames_builtin, encode_frames_builtin, pack_planes, unpack_planes, CodecSettings, LayoutKind,
};
use crate::planefield::{predict_cloud, Decoders, GaussianCloud, TriPlaneField};
use crate::trainer::{attribute_psnr, LossWeights, SurrogateTarget, TrainConfig, Trainer};

/// Plane bitstream size and attribute quality after a builtin-codec round trip.
#[derive(Debug, Clone, Copy, PartialEq)]
pub struct RatePoint {
    pub plane_bytes: usize,
    pub psnr_db: f64,
}

/// Codes the planes with the builtin codec, decodes them and measures the
/// attribute PSNR of the resulting predictions against `target`.
pub fn evaluate_planes(
    field: &TriPlaneField,
    decoders: &Decoders,
    target: &GaussianCloud,
    codec: &CodecSettings,
    layout: LayoutKind,
) -> Result<RatePoint> {
    let pack = pack_planes(field, layout)?;
    let bytes = encode_frames_builtin(&pack, codec)?;
    let decoded = unpack_planes(&decode_frames_builtin(&bytes)?, field.sh_degree)?;
    let pred = predict_cloud(&decoded, decoders, &target.positions)?;
    Ok(RatePoint {
        plane_bytes: bytes.len(),
        psnr_db: attribute_psnr(&pred, target)?,
    })
}

/// Loss settings of one ablation arm.
#[derive(Debug, Clone, Copy, PartialEq)]
pub struct Arm {
    pub name: &'static str,
    pub weights: LossWeights,
    pub channel_weights: bool,
}

/// The three standard arms: L1 only, L1 plus entropy, and entropy with
/// channel-importance weights.
pub fn standard_arms(lambda_l1: f64, lambda_ent: f64) -> [Arm; 3] {
    [
        Arm {
            name: "l1-only",
            weights: LossWeights {
                lambda_ent: 0.0,
                lambda_l1,
            },
            channel_weights: false,
        },
        Arm {
            name: "l1+ent",
            weights: LossWeights { lambda_ent, lambda_l1 },
            channel_weights: false,
        },
        Arm {
            name: "l1+ent+wc",
            weights: LossWeights { lambda_ent, lambda_l1 },
            channel_weights: true,
        },
    ]
}

#[derive(Debug, Clone)]
pub struct ArmResult {
    pub arm: Arm,
    pub rate: RatePoint,
    pub trainer: Trainer,
}

fn check_forkable(base: &TrainConfig, arms: &[Arm]) -> Result<()> {
    if arms.iter().any(|a| a.weights.lambda_l1 != base.weights.lambda_l1) {
        return Err(Error::invalid("arms must share lambda_l1 with the base config"));
    }
    Ok(())
}

/// Trains the shared prefix up to the entropy start, then finishes one copy
/// per arm and evaluates it.
pub fn run_arms(
    base: &TrainConfig,
    target: &SurrogateTarget,
    arms: &[Arm],
    codec: &CodecSettings,
    layout: LayoutKind,
) -> Result<Vec<ArmResult>> {
    check_forkable(base, arms)?;
    let mut prefix = Trainer::new(base.clone(), target.clone())?;
    for it in 0..base.entropy_start {
        prefix.step(it)?;
    }
    arms.iter()
        .map(|&arm| {
            let mut t = prefix.clone();
            t.set_loss(arm.weights, arm.channel_weights)?;
            t.finish()?;
            let rate = evaluate_planes(t.field(), t.decoders(), target.cloud(), codec, layout)?;
            Ok(ArmResult { arm, rate, trainer: t })
        })
        .collect()
}

/// `2^0, 2^2, ..., 2^12`.
pub const Q_STEP_GRID: [f64; 7] = [1.0, 4.0, 16.0, 64.0, 256.0, 1024.0, 4096.0];

#[derive(Debug, Clone, Copy, PartialEq)]
pub struct SweepRow {
    pub q_step: f64,
    pub lambda_ent: f64,
    pub rate: RatePoint,
}

/// Trains one model per quantization step with fixed loss weights and
/// reports the coded plane size and quality of each.
pub fn sweep_q_step(
    base: &TrainConfig,
    target: &SurrogateTarget,
    steps: &[f64],
    codec: &CodecSettings,
    layout: LayoutKind,
) -> Result<Vec<SweepRow>> {
    let mut prefix = Trainer::new(base.clone(), target.clone())?;
    for it in 0..base.entropy_start {
        prefix.step(it)?;
    }
    steps
        .iter()
        .map(|&q| {
            let mut t = prefix.clone();
            t.set_q_step(q)?;
            t.finish()?;
            Ok(SweepRow {
                q_step: q,
                lambda_ent: base.weights.lambda_ent,
                rate: evaluate_planes(t.field(), t.decoders(), target.cloud(), codec, layout)?,
            })
        })
        .collect()
}
