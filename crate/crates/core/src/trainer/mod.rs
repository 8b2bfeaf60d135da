//! Optimization of the tri-plane field and decoders against a reference
//! cloud, with progressive channel masking and the rate regularizers.

mod adam;
mod loss;
mod scene;
mod schedule;

use std::io::Write;

use rand::SeedableRng;
use rand_chacha::ChaCha8Rng;

pub use adam::Adam;
pub use loss::{
    loss_and_gradient, surrogate_energy, total_loss, FieldGradient, GroupGradient, LossParts,
    LossWeights, SurrogateTarget,
};
pub use scene::synthetic_scene;
pub use schedule::ProgressiveSchedule;

use crate::error::{Error, Result};
use crate::planefield::{
    stencils, Attribute, Decoders, GaussianCloud, MlpDecoder, PointStencil, TriPlaneField, HIDDEN_WIDTH,
};
use crate::rdloss::{importance_from_gradients, ChannelImportance, EntropyModel, DEFAULT_MAX_WEIGHT, DEFAULT_Q_STEP};
use crate::transform::{BlockDct, BlockSpec};
use loss::{add_parts, group_loss, LossContext};

/// Entropy weight tuned on the desk-scale synthetic scene.
pub const DEFAULT_LAMBDA_ENT: f64 = 1e-11;
/// L1 weight tuned on the desk-scale synthetic scene.
pub const DEFAULT_LAMBDA_L1: f64 = 1e-12;

/// Training hyperparameters.
#[derive(Debug, Clone, PartialEq)]
pub struct TrainConfig {
    pub iterations: u64,
    pub resolution: usize,
    pub channels: usize,
    pub hidden: usize,
    pub plane_lr: f64,
    pub decoder_lr: f64,
    /// Both learning rates decay exponentially to this fraction by the end.
    pub lr_final_ratio: f64,
    pub weights: LossWeights,
    pub entropy_start: u64,
    pub ci_iteration: u64,
    /// Entropy model scales are refit every this many iterations once the
    /// entropy term is on.
    pub refit_interval: u64,
    pub q_step: f64,
    pub block: BlockSpec,
    pub schedule: ProgressiveSchedule,
    /// When false the entropy term keeps all-ones channel weights after the
    /// importance measurement.
    pub use_channel_weights: bool,
    pub max_weight: f64,
    pub seed: u64,
}

impl Default for TrainConfig {
    fn default() -> Self {
        Self {
            iterations: 40_000,
            resolution: 512,
            channels: 8,
            hidden: HIDDEN_WIDTH,
            plane_lr: 0.005,
            decoder_lr: 1e-3,
            lr_final_ratio: 0.1,
            weights: LossWeights {
                lambda_ent: DEFAULT_LAMBDA_ENT,
                lambda_l1: DEFAULT_LAMBDA_L1,
            },
            entropy_start: 30_000,
            ci_iteration: 30_000,
            refit_interval: 100,
            q_step: DEFAULT_Q_STEP,
            block: BlockSpec::default(),
            schedule: ProgressiveSchedule::standard(),
            use_channel_weights: true,
            max_weight: DEFAULT_MAX_WEIGHT,
            seed: 0,
        }
    }
}

impl TrainConfig {
    /// Shrinks the run to `iterations`, rescaling the schedule, the entropy
    /// start and the importance iteration proportionally.
    pub fn scaled(&self, iterations: u64, channels: usize) -> Result<Self> {
        let reference = self.iterations.max(1);
        let scale = |t: u64| ((t as u128 * iterations as u128) / reference as u128) as u64;
        Ok(Self {
            iterations,
            channels,
            entropy_start: scale(self.entropy_start),
            ci_iteration: scale(self.ci_iteration),
            schedule: self.schedule.rescaled(reference, iterations, channels)?,
            ..self.clone()
        })
    }

    pub fn validate(&self) -> Result<()> {
        if self.resolution < 2 || self.channels == 0 || self.hidden == 0 {
            return Err(Error::invalid("resolution must be at least 2 and channels, hidden non-zero"));
        }
        if !(self.entropy_start <= self.ci_iteration && self.ci_iteration <= self.iterations) {
            return Err(Error::invalid(format!(
                "need entropy start {} <= importance iteration {} <= iterations {}",
                self.entropy_start, self.ci_iteration, self.iterations
            )));
        }
        for (name, v) in [
            ("plane learning rate", self.plane_lr),
            ("decoder learning rate", self.decoder_lr),
            ("final learning-rate ratio", self.lr_final_ratio),
            ("q_step", self.q_step),
            ("max weight", self.max_weight),
        ] {
            if !(v > 0.0 && v.is_finite()) {
                return Err(Error::invalid(format!("{name} must be positive, got {v}")));
            }
        }
        for (name, v) in [("lambda_ent", self.weights.lambda_ent), ("lambda_l1", self.weights.lambda_l1)] {
            if !(v >= 0.0 && v.is_finite()) {
                return Err(Error::invalid(format!("{name} must be non-negative, got {v}")));
            }
        }
        if self.refit_interval == 0 {
            return Err(Error::invalid("refit interval must be positive"));
        }
        self.schedule.validate_for(self.channels)
    }

    fn decay(&self, iteration: u64) -> f64 {
        self.lr_final_ratio
            .powf(iteration as f64 / self.iterations.max(1) as f64)
    }
}

/// `L` of the latest schedule stage starting at or before `iteration`.
pub fn active_channels(iteration: u64, schedule: &ProgressiveSchedule) -> usize {
    schedule.active_channels(iteration)
}

/// One row of the training log.
#[derive(Debug, Clone, Copy, PartialEq)]
pub struct LogRow {
    pub iteration: u64,
    pub energy: f64,
    pub entropy_bits: f64,
    pub l1: f64,
    pub total: f64,
}

pub const LOG_HEADER: &str = "iteration,energy,entropy_bits,l1,total";

pub fn write_log<W: Write>(rows: &[LogRow], mut out: W) -> std::io::Result<()> {
    writeln!(out, "{LOG_HEADER}")?;
    for r in rows {
        writeln!(out, "{},{:e},{:e},{:e},{:e}", r.iteration, r.energy, r.entropy_bits, r.l1, r.total)?;
    }
    Ok(())
}

/// Result of a full training run.
#[derive(Debug, Clone)]
pub struct TrainOutput {
    pub field: TriPlaneField,
    pub decoders: Decoders,
    pub model: EntropyModel,
    pub importance: ChannelImportance,
    /// Iteration at which importance was measured.
    pub ci_recorded_at: Option<u64>,
    pub log: Vec<LogRow>,
}

/// Mutable training state.
#[derive(Debug, Clone)]
pub struct Trainer {
    config: TrainConfig,
    target: SurrogateTarget,
    stencils: Vec<PointStencil>,
    field: TriPlaneField,
    decoders: Decoders,
    model: EntropyModel,
    importance: ChannelImportance,
    ci_recorded_at: Option<u64>,
    // [group][plane][channel]
    plane_opt: Vec<Vec<Vec<Adam>>>,
    decoder_opt: Vec<Adam>,
    rngs: Vec<ChaCha8Rng>,
    log: Vec<LogRow>,
}

impl Trainer {
    /// Random field and decoders drawn from the config seed.
    pub fn new(config: TrainConfig, target: SurrogateTarget) -> Result<Self> {
        config.validate()?;
        let mut rng = ChaCha8Rng::seed_from_u64(config.seed);
        let sh = target.cloud().sh_degree;
        let field = TriPlaneField::random(config.resolution, config.channels, sh, &mut rng)?;
        let decoders = Attribute::ALL.map(|a| MlpDecoder::random(config.channels, config.hidden, a.width(sh), &mut rng));
        Self::with_model(config, target, field, decoders)
    }

    /// Starts from the given parameters.
    pub fn with_model(config: TrainConfig, target: SurrogateTarget, field: TriPlaneField, decoders: Decoders) -> Result<Self> {
        config.validate()?;
        if field.resolution() != config.resolution || field.channels() != config.channels {
            return Err(Error::invalid("initial field does not match the config shape"));
        }
        if field.sh_degree != target.cloud().sh_degree {
            return Err(Error::invalid("field and target differ in SH degree"));
        }
        crate::planefield::check_decoders(&field, &decoders)?;
        let st = stencils(&field, &target.cloud().positions)?;
        let model = EntropyModel::for_field(config.q_step, config.block, &field)?;
        let channels = config.channels;
        let texels = config.resolution * config.resolution;
        let plane_opt = (0..4)
            .map(|_| (0..3).map(|_| (0..channels).map(|_| Adam::new(texels)).collect()).collect())
            .collect();
        let decoder_opt = decoders.iter().map(|d| Adam::new(d.parameter_count())).collect();
        let rngs = (0..4u64)
            .map(|g| {
                let mut r = ChaCha8Rng::seed_from_u64(config.seed);
                r.set_stream(g + 1);
                r
            })
            .collect();
        Ok(Self {
            importance: ChannelImportance::uniform(4, channels),
            config,
            target,
            stencils: st,
            field,
            decoders,
            model,
            ci_recorded_at: None,
            plane_opt,
            decoder_opt,
            rngs,
            log: Vec::new(),
        })
    }

    pub fn config(&self) -> &TrainConfig {
        &self.config
    }

    pub fn field(&self) -> &TriPlaneField {
        &self.field
    }

    pub fn decoders(&self) -> &Decoders {
        &self.decoders
    }

    pub fn model(&self) -> &EntropyModel {
        &self.model
    }

    pub fn importance(&self) -> &ChannelImportance {
        &self.importance
    }

    pub fn log(&self) -> &[LogRow] {
        &self.log
    }

    /// Changes the entropy-model quantization step. Only iterations from the
    /// entropy start on depend on it.
    pub fn set_q_step(&mut self, q_step: f64) -> Result<()> {
        let config = TrainConfig {
            q_step,
            ..self.config.clone()
        };
        config.validate()?;
        self.model = EntropyModel::from_scales(q_step, self.model.spec, self.model.slices(), self.model.scales().to_vec())?;
        self.config = config;
        Ok(())
    }

    /// Replaces the loss configuration for the remaining iterations. Runs
    /// that differ only in these settings share every step before the entropy
    /// start, so a trainer forked there matches a fresh run.
    pub fn set_loss(&mut self, weights: LossWeights, use_channel_weights: bool) -> Result<()> {
        let config = TrainConfig {
            weights,
            use_channel_weights,
            ..self.config.clone()
        };
        config.validate()?;
        self.config = config;
        Ok(())
    }

    /// Measures channel importance from one full energy-gradient pass.
    pub fn measure_importance(&mut self, iteration: u64) -> Result<()> {
        let ctx = LossContext {
            stencils: &self.stencils,
            target: &self.target,
            weights: LossWeights::default(),
            model: &self.model,
            importance: &self.importance,
            entropy_on: false,
        };
        let dct = BlockDct::new(self.config.block);
        let grads: Vec<[Vec<f64>; 3]> = self
            .field
            .groups
            .iter()
            .enumerate()
            .map(|(g, group)| group_loss(&ctx, &dct, g, group, &self.decoders[g], None, true).2.expect("gradient"))
            .collect();
        self.set_importance(&grads, iteration);
        Ok(())
    }

    fn set_importance(&mut self, grads: &[[Vec<f64>; 3]], iteration: u64) {
        let ci = importance_from_gradients(grads, self.config.channels, self.target.len(), self.config.max_weight);
        log::info!("channel importance at iteration {iteration}: {:?}", ci.scores);
        self.importance = if self.config.use_channel_weights {
            ci
        } else {
            ChannelImportance {
                weights: vec![vec![1.0; self.config.channels]; 4],
                scores: ci.scores,
            }
        };
        self.ci_recorded_at = Some(iteration);
    }

    /// One optimizer update at `iteration`.
    pub fn step(&mut self, iteration: u64) -> Result<LogRow> {
        let cfg = &self.config;
        let entropy_on = cfg.weights.lambda_ent > 0.0 && iteration >= cfg.entropy_start;
        if entropy_on && (iteration - cfg.entropy_start).is_multiple_of(cfg.refit_interval) {
            self.model.fit(&self.field);
        }
        let measure_ci = iteration == cfg.ci_iteration && self.ci_recorded_at.is_none();
        let active = cfg.schedule.active_channels(iteration);
        let decay = cfg.decay(iteration);
        let (plane_lr, decoder_lr) = (cfg.plane_lr * decay, cfg.decoder_lr * decay);
        let dct = BlockDct::new(cfg.block);
        let texels = cfg.resolution * cfg.resolution;

        // importance feeds this step's entropy weights, so it is measured first
        if measure_ci {
            self.measure_importance(iteration)?;
        }

        let ctx = LossContext {
            stencils: &self.stencils,
            target: &self.target,
            weights: self.config.weights,
            model: &self.model,
            importance: &self.importance,
            entropy_on,
        };
        let mut parts = LossParts::default();
        let mut grads = Vec::with_capacity(4);
        for (g, group) in self.field.groups.iter().enumerate() {
            let (p, grad, _) = group_loss(&ctx, &dct, g, group, &self.decoders[g], Some(&mut self.rngs[g]), true);
            parts = add_parts(parts, p);
            grads.push(grad.expect("gradient requested"));
        }
        if !parts.is_finite() {
            return Err(Error::Training {
                iteration,
                message: format!(
                    "non-finite loss: energy {}, entropy bits {}, l1 {}, total {}",
                    parts.energy, parts.entropy_bits, parts.l1, parts.total
                ),
            });
        }

        for (g, grad) in grads.iter().enumerate() {
            for (p, plane) in self.field.groups[g].planes.iter_mut().enumerate() {
                for c in 0..active {
                    let values = plane.channel_mut(c);
                    let gslice = &grad.planes[p][c * texels..(c + 1) * texels];
                    self.plane_opt[g][p][c].step(plane_lr, values.iter_mut(), gslice.iter().copied());
                }
            }
            self.decoder_opt[g].step(decoder_lr, self.decoders[g].parameters_mut(), grad.decoder.parameters());
        }

        let row = LogRow {
            iteration,
            energy: parts.energy,
            entropy_bits: parts.entropy_bits,
            l1: parts.l1,
            total: parts.total,
        };
        self.log.push(row);
        Ok(row)
    }

    /// Iteration at which channel importance was measured, if it was.
    pub fn importance_recorded_at(&self) -> Option<u64> {
        self.ci_recorded_at
    }

    /// Runs every remaining iteration, measuring importance after the last
    /// one when the configured iteration equals the total.
    pub fn finish(&mut self) -> Result<()> {
        let start = self.log.len() as u64;
        for it in start..self.config.iterations {
            let row = self.step(it)?;
            if it % 500 == 0 {
                log::debug!("iteration {it}: energy {:.6e} bits {:.1} total {:.6e}", row.energy, row.entropy_bits, row.total);
            }
        }
        if self.ci_recorded_at.is_none() {
            self.measure_importance(self.config.iterations)?;
        }
        Ok(())
    }

    /// Runs every remaining iteration and returns the trained model.
    pub fn run(mut self) -> Result<TrainOutput> {
        self.finish()?;
        self.model.fit(&self.field);
        Ok(TrainOutput {
            field: self.field,
            decoders: self.decoders,
            model: self.model,
            importance: self.importance,
            ci_recorded_at: self.ci_recorded_at,
            log: self.log,
        })
    }
}

pub fn run_training(config: TrainConfig, target: SurrogateTarget) -> Result<TrainOutput> {
    Trainer::new(config, target)?.run()
}

/// `10 log10(1 / MSE)` over every attribute component of every point.
pub fn attribute_psnr(prediction: &GaussianCloud, target: &GaussianCloud) -> Result<f64> {
    if prediction.len() != target.len() || prediction.sh_degree != target.sh_degree {
        return Err(Error::invalid("clouds differ in size or SH degree"));
    }
    let mut sum = 0.0;
    let mut count = 0usize;
    for attr in Attribute::ALL {
        for (a, b) in prediction.attribute(attr).iter().zip(target.attribute(attr)) {
            sum += (a - b).powi(2);
            count += 1;
        }
    }
    if count == 0 {
        return Err(Error::invalid("clouds are empty"));
    }
    Ok(10.0 * (count as f64 / sum).log10())
}
