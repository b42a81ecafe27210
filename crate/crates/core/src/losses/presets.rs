//! Per-task loss weights and schedule lengths, shipped as JSON.

use serde::{Deserialize, Serialize};

use super::LossWeights;
use crate::model::InitScheme;
use crate::error::{Error, Result};

#[derive(Clone, Debug, PartialEq, Serialize, Deserialize)]
#[serde(deny_unknown_fields)]
pub struct TaskPreset {
    pub name: String,
    pub bidirectional: bool,
    pub weights: LossWeights,
    pub epochs: usize,
    pub lr_decay_start_epoch: usize,
    /// Images per step; each is translated under both intensities of its pair.
    pub batch_size: usize,
    pub image_size: usize,
    /// Kernel initialisation for all networks; the network default when absent.
    #[serde(default)]
    pub init: Option<InitScheme>,
}

const PRESETS: &[(&str, &str)] = &[
    ("yosemite", include_str!("../../presets/yosemite.json")),
    ("afhq", include_str!("../../presets/afhq.json")),
    ("lol", include_str!("../../presets/lol.json")),
    ("sidd", include_str!("../../presets/sidd.json")),
    ("toy", include_str!("../../presets/toy.json")),
];

pub fn preset_names() -> Vec<&'static str> {
    PRESETS.iter().map(|(n, _)| *n).collect()
}

impl TaskPreset {
    pub fn from_json(text: &str) -> Result<Self> {
        let p: TaskPreset = serde_json::from_str(text).map_err(|e| Error::config(format!("bad preset: {e}")))?;
        p.validate()?;
        Ok(p)
    }

    pub fn validate(&self) -> Result<()> {
        self.weights.validate()?;
        if self.lr_decay_start_epoch > self.epochs {
            return Err(Error::config("lr_decay_start_epoch exceeds epochs"));
        }
        if self.batch_size == 0 || self.image_size == 0 {
            return Err(Error::config("batch_size and image_size must be positive"));
        }
        if !self.bidirectional && self.weights.lambda_df != 0.0 {
            return Err(Error::config("unidirectional presets cannot weight the domain fidelity term"));
        }
        Ok(())
    }
}

pub fn preset(name: &str) -> Result<TaskPreset> {
    let key = name.trim().to_ascii_lowercase();
    let key = key.strip_suffix("_preset.json").or_else(|| key.strip_suffix(".json")).unwrap_or(&key);
    PRESETS
        .iter()
        .find(|(n, _)| *n == key)
        .ok_or_else(|| Error::config(format!("unknown preset {name:?}; known: {}", preset_names().join(", "))))
        .and_then(|(_, text)| TaskPreset::from_json(text))
}
