//! Alternating discriminator/generator optimization with Adam, linear lr
//! decay, exact checkpoint resume, and CSV loss logs.

mod adam;
mod checkpoint;
mod run;
mod step;

pub use adam::{clip_global_norm, Adam, AdamConfig};
pub use checkpoint::{decode_tensors, encode_tensors, load_networks, Checkpoint, CheckpointMeta, SCHEMA_VERSION};
pub use run::{train, RunConfig, RunOptions, RunSummary};
pub use step::{train_step, StepReport, TrainState};

use serde::{Deserialize, Serialize};

use crate::error::{Error, Result};
use crate::losses::{preset, LossWeights, TaskPreset};
use crate::model::{DiscriminatorSpec, GeneratorSpec};

#[derive(Clone, Copy, Debug, Default, PartialEq, Eq, Serialize, Deserialize)]
#[serde(rename_all = "snake_case")]
pub enum UpdateOrder {
    #[default]
    DThenG,
    GThenD,
}

/// Variants of the objective selectable from config.
#[derive(Clone, Copy, Debug, PartialEq, Eq, Serialize, Deserialize)]
#[serde(rename_all = "snake_case")]
pub enum Ablation {
    /// No monotonicity or domain-fidelity terms.
    NoContrastive,
    MonoOnly,
    Full,
    ZeroMargin,
    UnitMargin,
}

impl Ablation {
    pub fn apply(self, w: LossWeights) -> LossWeights {
        match self {
            Ablation::NoContrastive => LossWeights {
                lambda_mn: 0.0,
                lambda_df: 0.0,
                ..w
            },
            Ablation::MonoOnly => LossWeights { lambda_df: 0.0, ..w },
            Ablation::Full => w,
            Ablation::ZeroMargin => LossWeights { epsilon: 0.0, ..w },
            Ablation::UnitMargin => LossWeights { epsilon: 1.0, ..w },
        }
    }
}

fn default_lr() -> f64 {
    1e-4
}
fn default_beta1() -> f64 {
    0.5
}
fn default_beta2() -> f64 {
    0.9
}
fn default_pairs() -> usize {
    2
}

#[derive(Clone, Debug, PartialEq, Serialize, Deserialize)]
pub struct TrainConfig {
    #[serde(default = "default_lr")]
    pub lr: f64,
    #[serde(default = "default_beta1")]
    pub adam_beta1: f64,
    #[serde(default = "default_beta2")]
    pub adam_beta2: f64,
    pub epochs: usize,
    pub lr_decay_start_epoch: usize,
    pub batch_size: usize,
    #[serde(default = "default_pairs")]
    pub pairs_per_item: usize,
    pub bidirectional: bool,
    pub seed: u64,
    pub preset_name: String,
    pub weights: LossWeights,
    pub generator: GeneratorSpec,
    pub discriminator: DiscriminatorSpec,
    #[serde(default)]
    pub delta_min: f64,
    #[serde(default)]
    pub update_order: UpdateOrder,
    #[serde(default)]
    pub grad_clip: Option<f64>,
    #[serde(default)]
    pub augment: crate::data::AugmentFlags,
}

impl TrainConfig {
    /// Desk-scale networks with the preset's weights and schedule.
    pub fn from_preset(p: &TaskPreset, seed: u64) -> Self {
        let mut generator = GeneratorSpec {
            bidirectional: p.bidirectional,
            ..GeneratorSpec::desk()
        };
        let mut discriminator = DiscriminatorSpec::desk();
        if let Some(init) = p.init {
            generator.init = init;
            discriminator.init = init;
        }
        TrainConfig {
            lr: default_lr(),
            adam_beta1: default_beta1(),
            adam_beta2: default_beta2(),
            epochs: p.epochs,
            lr_decay_start_epoch: p.lr_decay_start_epoch,
            batch_size: p.batch_size,
            pairs_per_item: 2,
            bidirectional: p.bidirectional,
            seed,
            preset_name: p.name.clone(),
            weights: p.weights,
            generator,
            discriminator,
            delta_min: 0.0,
            update_order: UpdateOrder::DThenG,
            grad_clip: None,
            augment: Default::default(),
        }
    }

    pub fn preset(name: &str, seed: u64) -> Result<Self> {
        Ok(Self::from_preset(&preset(name)?, seed))
    }

    pub fn validate(&self) -> Result<()> {
        self.weights.validate()?;
        self.generator.validate()?;
        self.discriminator.validate()?;
        if !(self.lr > 0.0 && self.lr.is_finite()) {
            return Err(Error::config("lr must be positive"));
        }
        if !(0.0..1.0).contains(&self.adam_beta1) || !(0.0..1.0).contains(&self.adam_beta2) {
            return Err(Error::config("adam betas must be in [0, 1)"));
        }
        if self.lr_decay_start_epoch > self.epochs {
            return Err(Error::config("lr_decay_start_epoch exceeds epochs"));
        }
        if self.batch_size == 0 {
            return Err(Error::config("batch_size must be positive"));
        }
        if self.pairs_per_item != 2 {
            return Err(Error::config("each item is translated under exactly two intensities"));
        }
        if self.generator.bidirectional != self.bidirectional {
            return Err(Error::config("generator spec and train config disagree on bidirectional"));
        }
        if !self.bidirectional && self.weights.lambda_df != 0.0 {
            return Err(Error::config("unidirectional training has no domain fidelity term"));
        }
        if !(0.0..1.0).contains(&self.delta_min) {
            return Err(Error::config("delta_min must be in [0, 1)"));
        }
        Ok(())
    }

    pub fn adam(&self) -> AdamConfig {
        AdamConfig {
            beta1: self.adam_beta1,
            beta2: self.adam_beta2,
            eps: 1e-8,
        }
    }
}

/// Constant lr until `lr_decay_start_epoch`, then linear to 0 at `epochs`.
pub fn lr_schedule(epoch: usize, cfg: &TrainConfig) -> f64 {
    if epoch < cfg.lr_decay_start_epoch {
        return cfg.lr;
    }
    if epoch >= cfg.epochs {
        return 0.0;
    }
    cfg.lr * (cfg.epochs - epoch) as f64 / (cfg.epochs - cfg.lr_decay_start_epoch) as f64
}
