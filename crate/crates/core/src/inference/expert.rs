use std::path::Path;

use rand::{seq::index::sample, SeedableRng};
use rand_chacha::ChaCha8Rng;
use serde::{Deserialize, Serialize};

use super::search::exhaustive_infer;
use super::{translate_constant, AestheticCriterion, Translator};
use crate::autograd::{Tape, Tensor};
use crate::error::{Error, Result};
use crate::model::{ControlBounds, ConvLayer, ImageBatch, InitScheme, Params};
use crate::training::{decode_tensors, encode_tensors, Adam, AdamConfig};

#[derive(Clone, Debug, PartialEq, Serialize, Deserialize)]
#[serde(deny_unknown_fields)]
pub struct ExpertConfig {
    pub base_channels: usize,
    pub lr: f64,
    pub steps: usize,
    pub batch_size: usize,
    pub seed: u64,
    /// Grid size for the exhaustive labels.
    pub label_points: usize,
}

impl Default for ExpertConfig {
    fn default() -> Self {
        ExpertConfig {
            base_channels: 8,
            lr: 1e-3,
            steps: 400,
            batch_size: 4,
            seed: 0,
            label_points: 11,
        }
    }
}

#[derive(Clone, Debug)]
pub struct PairedSample {
    pub input: ImageBatch,
    pub reference: ImageBatch,
}

fn expert_layers(base: usize) -> Vec<ConvLayer> {
    vec![
        ConvLayer::new("conv0", 3, base, 3, 2, 1),
        ConvLayer::new("conv1", base, 2 * base, 3, 2, 1),
        ConvLayer::new("conv2", 2 * base, 4 * base, 3, 2, 1),
        ConvLayer::new("conv3", 4 * base, 4 * base, 3, 2, 1),
        ConvLayer::new("head", 4 * base, 1, 1, 1, 0),
    ]
}

/// Small regressor from an image to its best intensity.
#[derive(Clone, Debug)]
pub struct Expert {
    pub base_channels: usize,
    pub bounds: ControlBounds,
    pub params: Params<f32>,
}

#[derive(Serialize, Deserialize)]
struct ExpertMeta {
    base_channels: usize,
    bounds: ControlBounds,
}

impl Expert {
    pub fn new(base_channels: usize, bounds: ControlBounds, seed: u64) -> Result<Self> {
        if base_channels == 0 {
            return Err(Error::config("expert base_channels must be positive"));
        }
        let layers = expert_layers(base_channels);
        let params = crate::model::init_params(&layers, InitScheme::HeNormal { slope: 0.2 }, seed);
        Ok(Expert { base_channels, bounds, params })
    }

    fn forward_on(&self, tape: &mut Tape<f32>, bound: &crate::model::Bound, x: crate::autograd::Var) -> crate::autograd::Var {
        let layers = expert_layers(self.base_channels);
        let mut h = x;
        for (i, l) in layers.iter().enumerate().take(4) {
            h = tape.conv2d(h, bound.var(2 * i), Some(bound.var(2 * i + 1)), l.stride, l.pad);
            h = tape.leaky_relu(h, 0.2);
        }
        h = tape.global_avg_pool(h);
        tape.conv2d(h, bound.var(8), Some(bound.var(9)), 1, 0)
    }

    /// Raw predictions, one per batch item.
    pub fn predict_raw(&self, images: &ImageBatch) -> Vec<f32> {
        let mut tape = Tape::new();
        let bound = self.params.bind(&mut tape, false);
        let x = tape.constant(images.tensor().clone());
        let y = self.forward_on(&mut tape, &bound, x);
        tape.value(y).data().to_vec()
    }

    /// Predictions clamped into the bounds.
    pub fn predict(&self, images: &ImageBatch) -> Vec<f32> {
        self.predict_raw(images)
            .into_iter()
            .map(|v| v.clamp(self.bounds.min, self.bounds.max))
            .collect()
    }

    pub fn save(&self, dir: &Path) -> Result<()> {
        std::fs::create_dir_all(dir)?;
        let meta = ExpertMeta { base_channels: self.base_channels, bounds: self.bounds };
        std::fs::write(dir.join("expert.json"), serde_json::to_vec_pretty(&meta)?)?;
        let bytes = encode_tensors(self.params.iter().map(|(n, t)| (n.to_string(), t)));
        std::fs::write(dir.join("expert.bin"), bytes)?;
        Ok(())
    }

    pub fn load(dir: &Path) -> Result<Self> {
        let meta: ExpertMeta = serde_json::from_slice(&std::fs::read(dir.join("expert.json"))?)?;
        let mut expert = Expert::new(meta.base_channels, meta.bounds, 0)?;
        let tensors = decode_tensors(&std::fs::read(dir.join("expert.bin"))?)?;
        if tensors.len() != expert.params.len() {
            return Err(Error::Checkpoint("expert parameter count mismatch".into()));
        }
        for (name, t) in tensors {
            let slot = expert
                .params
                .get_mut(&name)
                .ok_or_else(|| Error::Checkpoint(format!("unexpected expert tensor {name}")))?;
            if slot.shape() != t.shape() {
                return Err(Error::Checkpoint(format!("expert tensor {name} has the wrong shape")));
            }
            *slot = t;
        }
        Ok(expert)
    }
}

/// Labels each paired item with its exhaustive-search best intensity under
/// the frozen translator, then fits the expert with mean absolute error.
/// Returns the expert and the labels.
pub fn train_expert(
    g: &dyn Translator,
    items: &[PairedSample],
    criterion: &dyn AestheticCriterion,
    bounds: ControlBounds,
    cfg: &ExpertConfig,
) -> Result<(Expert, Vec<f32>)> {
    if items.is_empty() {
        return Err(Error::config("expert training needs at least one paired item"));
    }
    if cfg.batch_size == 0 || cfg.label_points < 2 {
        return Err(Error::config("expert batch_size must be positive and label_points at least 2"));
    }
    let labels = items
        .iter()
        .map(|s| Ok(exhaustive_infer(g, &s.input, Some(&s.reference), criterion, cfg.label_points, bounds)?.result.c_star as f32))
        .collect::<Result<Vec<f32>>>()?;
    let inputs: Vec<&ImageBatch> = items.iter().map(|s| &s.input).collect();
    let mut expert = fit(&inputs, &labels, bounds, cfg)?;
    expert.bounds = bounds;
    Ok((expert, labels))
}

fn fit(inputs: &[&ImageBatch], labels: &[f32], bounds: ControlBounds, cfg: &ExpertConfig) -> Result<Expert> {
    let mut expert = Expert::new(cfg.base_channels, bounds, cfg.seed)?;
    let mean = labels.iter().sum::<f32>() / labels.len() as f32;
    if let Some(b) = expert.params.get_mut("head.bias") {
        b.data_mut()[0] = mean;
    }
    let mut adam = Adam::new(&expert.params);
    let adam_cfg = AdamConfig { beta1: 0.9, beta2: 0.999, eps: 1e-8 };
    let mut rng = ChaCha8Rng::seed_from_u64(cfg.seed);
    let batch = cfg.batch_size.min(inputs.len());
    for _ in 0..cfg.steps {
        let idx = sample(&mut rng, inputs.len(), batch).into_vec();
        let x = ImageBatch::stack(&idx.iter().map(|&i| inputs[i]).collect::<Vec<_>>())?;
        let y = Tensor::from_vec([batch, 1, 1, 1], idx.iter().map(|&i| labels[i]).collect());
        let mut tape = Tape::new();
        let bound = expert.params.bind(&mut tape, true);
        let xv = tape.constant(x.into_tensor());
        let yv = tape.constant(y);
        let pred = expert.forward_on(&mut tape, &bound, xv);
        let diff = tape.sub(pred, yv);
        let abs = tape.abs(diff);
        let loss = tape.mean(abs);
        let grads = tape.backward(loss);
        let g: Vec<Tensor<f32>> = (0..expert.params.len())
            .map(|i| grads.get(bound.var(i)).cloned().unwrap_or_else(|| Tensor::zeros(expert.params.tensors()[i].shape())))
            .collect();
        let (next, opt) = adam.propose(&expert.params, &g, cfg.lr, adam_cfg);
        if !next.all_finite() {
            return Err(Error::NonFinite { what: "expert parameters".into(), step: opt.t });
        }
        expert.params = next;
        adam = opt;
    }
    Ok(expert)
}

/// One translation at the expert's predicted intensity.
pub fn expert_infer(expert: &Expert, g: &dyn Translator, x: &ImageBatch) -> Result<(ImageBatch, f32)> {
    if x.len() != 1 {
        return Err(Error::shape("expert inference works on one image at a time"));
    }
    let c = expert.predict(x)[0];
    Ok((translate_constant(g, x, c, expert.bounds)?, c))
}

#[cfg(test)]
mod tests {
    use super::*;

    fn img(v: f32) -> ImageBatch {
        ImageBatch::new(Tensor::from_fn([1, 3, 16, 16], |[_, c, h, w]| v * ((c + h + w) % 5) as f32 / 5.0)).unwrap()
    }

    #[test]
    fn constant_labels_are_learned() {
        let inputs: Vec<ImageBatch> = (0..6).map(|i| img(i as f32 / 6.0)).collect();
        let refs: Vec<&ImageBatch> = inputs.iter().collect();
        let cfg = ExpertConfig { steps: 60, ..Default::default() };
        let e = fit(&refs, &[0.5; 6], ControlBounds::UNIT, &cfg).unwrap();
        for x in &inputs {
            assert!((e.predict(x)[0] - 0.5).abs() < 0.05);
        }
        let again = fit(&refs, &[0.5; 6], ControlBounds::UNIT, &cfg).unwrap();
        assert_eq!(e.params, again.params);
    }

    #[test]
    fn empty_subset_is_a_config_error() {
        let r = train_expert(&super::super::PassThrough, &[], &super::super::PsnrToReference, ControlBounds::UNIT, &ExpertConfig::default());
        assert!(matches!(r, Err(Error::Config(_))));
    }

    #[test]
    fn save_load_round_trip() {
        let dir = tempfile::tempdir().unwrap();
        let e = Expert::new(4, ControlBounds::UNIT, 3).unwrap();
        e.save(dir.path()).unwrap();
        let back = Expert::load(dir.path()).unwrap();
        assert_eq!(e.params, back.params);
        assert_eq!(back.bounds, ControlBounds::UNIT);
    }
}
