use serde::{Deserialize, Serialize};

use crate::autograd::Tensor;
use crate::error::{Error, Result};

/// Batched images in `[-1, 1]`, `(batch, channels, height, width)`.
#[derive(Clone, Debug, PartialEq)]
pub struct ImageBatch(Tensor<f32>);

impl ImageBatch {
    /// Spatial dims must be multiples of this for the four down-samplings.
    pub const ALIGN: usize = 16;

    pub fn new(tensor: Tensor<f32>) -> Result<Self> {
        let [n, c, h, w] = tensor.shape();
        if n == 0 || c == 0 {
            return Err(Error::shape(format!("empty image batch {:?}", tensor.shape())));
        }
        if h % Self::ALIGN != 0 || w % Self::ALIGN != 0 || h == 0 || w == 0 {
            return Err(Error::shape(format!(
                "image size {h}x{w} is not a positive multiple of {}",
                Self::ALIGN
            )));
        }
        if !tensor.all_finite() {
            return Err(Error::range("image batch contains non-finite values"));
        }
        Ok(ImageBatch(tensor))
    }

    pub fn tensor(&self) -> &Tensor<f32> {
        &self.0
    }

    pub fn into_tensor(self) -> Tensor<f32> {
        self.0
    }

    pub fn shape(&self) -> [usize; 4] {
        self.0.shape()
    }

    pub fn len(&self) -> usize {
        self.0.batch()
    }

    pub fn is_empty(&self) -> bool {
        self.0.batch() == 0
    }

    pub fn item(&self, i: usize) -> ImageBatch {
        ImageBatch(self.0.slice_batch(i, 1))
    }

    pub fn stack(items: &[&ImageBatch]) -> Result<ImageBatch> {
        let parts: Vec<&Tensor<f32>> = items.iter().map(|b| &b.0).collect();
        if parts.is_empty() {
            return Err(Error::shape("cannot stack zero batches"));
        }
        let first = parts[0].shape();
        if parts.iter().any(|p| p.shape()[1..] != first[1..]) {
            return Err(Error::shape("cannot stack batches of different item shapes"));
        }
        Ok(ImageBatch(Tensor::stack_batch(&parts)))
    }

    /// Tiles the whole batch: `[a, b] -> [a, b, a, b]` for `times == 2`.
    pub fn tile(&self, times: usize) -> ImageBatch {
        let parts: Vec<&Tensor<f32>> = std::iter::repeat_n(&self.0, times).collect();
        ImageBatch(Tensor::stack_batch(&parts))
    }
}

/// Interval the control values must lie in.
#[derive(Clone, Copy, Debug, PartialEq, Serialize, Deserialize)]
pub struct ControlBounds {
    pub min: f32,
    pub max: f32,
}

impl ControlBounds {
    pub const UNIT: ControlBounds = ControlBounds { min: 0.0, max: 1.0 };
    /// Widened range for out-of-bound inference.
    pub const OUT_OF_BOUND: ControlBounds = ControlBounds { min: -1.0, max: 2.0 };

    pub fn new(min: f32, max: f32) -> Result<Self> {
        if !(min.is_finite() && max.is_finite() && min < max) {
            return Err(Error::config(format!("invalid control bounds [{min}, {max}]")));
        }
        Ok(ControlBounds { min, max })
    }

    pub fn contains(&self, v: f32) -> bool {
        v >= self.min && v <= self.max
    }

    pub fn check(&self, v: f32) -> Result<()> {
        if self.contains(v) {
            Ok(())
        } else {
            Err(Error::range(format!(
                "control value {v} outside [{}, {}]",
                self.min, self.max
            )))
        }
    }
}

impl Default for ControlBounds {
    fn default() -> Self {
        Self::UNIT
    }
}

/// Per-pixel translation intensity, `(batch, 1, height, width)`.
#[derive(Clone, Debug, PartialEq)]
pub struct ControlMap {
    tensor: Tensor<f32>,
    bounds: ControlBounds,
}

impl ControlMap {
    pub fn new(tensor: Tensor<f32>, bounds: ControlBounds) -> Result<Self> {
        if tensor.channels() != 1 {
            return Err(Error::shape(format!(
                "control map must have 1 channel, got {}",
                tensor.channels()
            )));
        }
        if let Some(v) = tensor.data().iter().find(|v| !bounds.contains(**v)) {
            return Err(Error::range(format!(
                "control value {v} outside [{}, {}]",
                bounds.min, bounds.max
            )));
        }
        Ok(ControlMap { tensor, bounds })
    }

    /// A map filled with one value per batch item.
    pub fn constant_per_item(values: &[f32], height: usize, width: usize, bounds: ControlBounds) -> Result<Self> {
        for &v in values {
            bounds.check(v)?;
        }
        let plane = height * width;
        let mut data = Vec::with_capacity(values.len() * plane);
        for &v in values {
            data.extend(std::iter::repeat_n(v, plane));
        }
        Self::new(Tensor::from_vec([values.len(), 1, height, width], data), bounds)
    }

    pub fn constant(batch: usize, height: usize, width: usize, value: f32) -> Result<Self> {
        Self::constant_per_item(&vec![value; batch], height, width, ControlBounds::UNIT)
    }

    pub fn tensor(&self) -> &Tensor<f32> {
        &self.tensor
    }

    pub fn bounds(&self) -> ControlBounds {
        self.bounds
    }

    pub fn shape(&self) -> [usize; 4] {
        self.tensor.shape()
    }

    /// The shared value when every entry of every item is equal.
    pub fn uniform_value(&self) -> Option<f32> {
        let d = self.tensor.data();
        let first = *d.first()?;
        d.iter().all(|&v| v == first).then_some(first)
    }

    /// True when each batch item is constant-valued.
    pub fn is_constant_per_item(&self) -> bool {
        let plane = self.tensor.plane();
        self.tensor
            .data()
            .chunks(plane)
            .all(|ch| ch.iter().all(|&v| v == ch[0]))
    }

    /// Broadcasts a single-item map over `batch` items.
    pub fn repeat(&self, batch: usize) -> Result<Self> {
        if self.tensor.batch() != 1 {
            return Err(Error::shape("only single-item control maps can be repeated"));
        }
        let parts: Vec<&Tensor<f32>> = std::iter::repeat_n(&self.tensor, batch).collect();
        Ok(ControlMap {
            tensor: Tensor::stack_batch(&parts),
            bounds: self.bounds,
        })
    }

    pub fn stack(items: &[&ControlMap]) -> Result<Self> {
        let first = items.first().ok_or_else(|| Error::shape("cannot stack zero maps"))?;
        let parts: Vec<&Tensor<f32>> = items.iter().map(|m| &m.tensor).collect();
        if parts.iter().any(|p| p.shape()[1..] != first.tensor.shape()[1..]) {
            return Err(Error::shape("cannot stack control maps of different sizes"));
        }
        Ok(ControlMap {
            tensor: Tensor::stack_batch(&parts),
            bounds: first.bounds,
        })
    }
}

/// Spatial discriminator output, `(batch, 1, h', w')`.
#[derive(Clone, Debug, PartialEq)]
pub struct ConfidenceMap(pub Tensor<f32>);

impl ConfidenceMap {
    pub fn tensor(&self) -> &Tensor<f32> {
        &self.0
    }

    pub fn shape(&self) -> [usize; 4] {
        self.0.shape()
    }

    pub fn mean(&self) -> f32 {
        self.0.mean()
    }
}

#[cfg(test)]
mod tests {
    use super::*;

    #[test]
    fn image_batch_rejects_unaligned_sizes() {
        assert!(ImageBatch::new(Tensor::zeros([1, 3, 64, 64])).is_ok());
        assert!(matches!(
            ImageBatch::new(Tensor::zeros([1, 3, 60, 64])),
            Err(Error::Shape(_))
        ));
        let mut t = Tensor::zeros([1, 3, 16, 16]);
        t.data_mut()[5] = f32::NAN;
        assert!(matches!(ImageBatch::new(t), Err(Error::Range(_))));
    }

    #[test]
    fn control_map_enforces_bounds() {
        assert!(ControlMap::constant(2, 16, 16, 0.5).is_ok());
        assert!(matches!(ControlMap::constant(1, 16, 16, 1.5), Err(Error::Range(_))));
        let oob = ControlMap::constant_per_item(&[1.5], 16, 16, ControlBounds::OUT_OF_BOUND).unwrap();
        assert_eq!(oob.uniform_value(), Some(1.5));
    }

    #[test]
    fn tile_repeats_whole_batch() {
        let t = Tensor::from_fn([2, 1, 16, 16], |[n, ..]| n as f32);
        let b = ImageBatch::new(t).unwrap().tile(2);
        let firsts: Vec<f32> = (0..4).map(|i| b.tensor().get([i, 0, 0, 0])).collect();
        assert_eq!(firsts, vec![0.0, 1.0, 0.0, 1.0]);
    }
}
