use rand::Rng;
use serde::{Deserialize, Serialize};

use crate::autograd::Tensor;
use crate::error::{Error, Result};
use crate::model::ImageBatch;

#[derive(Clone, Copy, Debug, Default, PartialEq, Eq, Serialize, Deserialize)]
pub struct AugmentFlags {
    #[serde(default)]
    pub hflip: bool,
    #[serde(default)]
    pub random_crop: Option<usize>,
}

/// Per-item random horizontal flip (probability 1/2) and random crop. All
/// randomness comes from `rng`, drawn in item order.
pub fn augment(batch: &ImageBatch, flags: AugmentFlags, rng: &mut impl Rng) -> Result<ImageBatch> {
    let [n, c, h, w] = batch.shape();
    let (ch, cw) = match flags.random_crop {
        Some(s) if s > h || s > w => {
            return Err(Error::config(format!("crop {s} exceeds image {h}x{w}")));
        }
        Some(s) => (s, s),
        None => (h, w),
    };
    let src = batch.tensor();
    let mut parts = Vec::with_capacity(n);
    for i in 0..n {
        let flip = flags.hflip && rng.random_bool(0.5);
        let (oy, ox) = if flags.random_crop.is_some() {
            (rng.random_range(0..=h - ch), rng.random_range(0..=w - cw))
        } else {
            (0, 0)
        };
        parts.push(Tensor::from_fn([1, c, ch, cw], |[_, k, y, x]| {
            let sx = if flip { ox + cw - 1 - x } else { ox + x };
            src.get([i, k, oy + y, sx])
        }));
    }
    let refs: Vec<&Tensor<f32>> = parts.iter().collect();
    ImageBatch::new(Tensor::stack_batch(&refs))
}
