use std::collections::BTreeMap;
use std::path::Path;
use std::sync::{Arc, RwLock};

use serde::{Deserialize, Serialize};

use crate::error::{Error, Result};
use crate::inference::{Expert, PassThrough, Translator};
use crate::model::Generator;
use crate::training::load_networks;

#[derive(Clone, Copy, Debug, Default, PartialEq, Eq, Serialize, Deserialize)]
#[serde(rename_all = "snake_case")]
pub enum Direction {
    /// Source domain to target domain.
    #[default]
    Xy,
    Yx,
}

enum Backend {
    Checkpoint {
        g_xy: Generator<f32>,
        g_yx: Option<Generator<f32>>,
    },
    Stub(PassThrough),
}

/// A servable model: generators plus an optional expert.
pub struct Model {
    info: ModelInfo,
    backend: Backend,
    expert: Option<Expert>,
}

#[derive(Clone, Debug, PartialEq, Serialize, Deserialize)]
pub struct ModelInfo {
    pub id: String,
    pub preset: String,
    pub bidirectional: bool,
    pub step: u64,
    pub has_expert: bool,
}

impl Model {
    /// Loads a checkpoint directory, and `expert/` inside it when present.
    pub fn load(dir: &Path, id: Option<&str>) -> Result<Self> {
        let (meta, nets) = load_networks(dir)?;
        let expert_dir = dir.join("expert");
        let expert = if expert_dir.join("expert.json").exists() {
            Some(Expert::load(&expert_dir)?)
        } else {
            None
        };
        Ok(Model {
            info: ModelInfo {
                id: id.map(str::to_string).unwrap_or(meta.model_id),
                preset: meta.preset_name,
                bidirectional: meta.bidirectional,
                step: meta.step,
                has_expert: expert.is_some(),
            },
            backend: Backend::Checkpoint {
                g_xy: nets.g_xy,
                g_yx: nets.g_yx,
            },
            expert,
        })
    }

    /// A model that returns its input unchanged.
    pub fn pass_through(id: &str) -> Self {
        Model {
            info: ModelInfo {
                id: id.to_string(),
                preset: "pass_through".into(),
                bidirectional: true,
                step: 0,
                has_expert: false,
            },
            backend: Backend::Stub(PassThrough),
            expert: None,
        }
    }

    pub fn info(&self) -> &ModelInfo {
        &self.info
    }

    pub fn expert(&self) -> Option<&Expert> {
        self.expert.as_ref()
    }

    pub fn translator(&self, direction: Direction) -> Result<&dyn Translator> {
        match (&self.backend, direction) {
            (Backend::Stub(p), _) => Ok(p),
            (Backend::Checkpoint { g_xy, .. }, Direction::Xy) => Ok(g_xy),
            (Backend::Checkpoint { g_yx: Some(g), .. }, Direction::Yx) => Ok(g),
            (Backend::Checkpoint { g_yx: None, .. }, Direction::Yx) => {
                Err(Error::Unsupported(format!("model {} is one-directional", self.info.id)))
            }
        }
    }
}

/// Models by id. Readers share `Arc`s; replacing a model swaps the entry.
#[derive(Default)]
pub struct Registry {
    models: RwLock<BTreeMap<String, Arc<Model>>>,
}

impl Registry {
    pub fn new() -> Self {
        Self::default()
    }

    /// Registers `dir` itself when it is a checkpoint, else every
    /// subdirectory holding one, keyed by directory name.
    pub fn from_dir(dir: &Path) -> Result<Self> {
        let reg = Registry::new();
        if dir.join("meta.json").exists() {
            reg.insert(Model::load(dir, None)?);
            return Ok(reg);
        }
        let mut entries: Vec<_> = std::fs::read_dir(dir)?.collect::<std::io::Result<_>>()?;
        entries.sort_by_key(|e| e.file_name());
        for e in entries {
            let path = e.path();
            if path.join("meta.json").exists() {
                let id = e.file_name().to_string_lossy().into_owned();
                reg.insert(Model::load(&path, Some(&id))?);
            }
        }
        Ok(reg)
    }

    pub fn insert(&self, model: Model) {
        let id = model.info.id.clone();
        self.models.write().expect("registry lock").insert(id, Arc::new(model));
    }

    pub fn get(&self, id: &str) -> Result<Arc<Model>> {
        self.models
            .read()
            .expect("registry lock")
            .get(id)
            .cloned()
            .ok_or_else(|| Error::NotFound(format!("unknown model {id:?}")))
    }

    pub fn list(&self) -> Vec<ModelInfo> {
        self.models.read().expect("registry lock").values().map(|m| m.info.clone()).collect()
    }

    pub fn len(&self) -> usize {
        self.models.read().expect("registry lock").len()
    }

    pub fn is_empty(&self) -> bool {
        self.len() == 0
    }
}
