//! Domain datasets: synthetic pairs, PNG folders, augmentation, PNG I/O.

mod augment;
mod folder;
pub mod io;
mod synth;

pub use augment::{augment, AugmentFlags};
pub use folder::{load_folder, FolderDataset, FolderOptions, Manifest, ManifestEntry, Split};
pub use synth::{render_shapes, synth_generate, synth_paired, DomainPairSpec, DomainTask, PairedItem, SyntheticPair};

use crate::autograd::Tensor;
use crate::error::{Error, Result};
use crate::model::ImageBatch;

/// Indexed collection of single images, each `[1, 3, H, W]` in `[-1, 1]`.
pub trait Dataset {
    fn len(&self) -> usize;

    fn get(&self, index: usize) -> Result<Tensor<f32>>;

    fn is_empty(&self) -> bool {
        self.len() == 0
    }

    /// Stacks the items at `indices` into one batch.
    fn batch(&self, indices: &[usize]) -> Result<ImageBatch> {
        let items = indices.iter().map(|&i| self.get(i)).collect::<Result<Vec<_>>>()?;
        let refs: Vec<&Tensor<f32>> = items.iter().collect();
        if refs.is_empty() {
            return Err(Error::shape("empty batch"));
        }
        ImageBatch::new(Tensor::stack_batch(&refs))
    }
}

#[derive(Clone, Debug, Default, PartialEq)]
pub struct InMemory(Vec<Tensor<f32>>);

impl InMemory {
    pub fn new(items: Vec<Tensor<f32>>) -> Self {
        InMemory(items)
    }

    pub fn items(&self) -> &[Tensor<f32>] {
        &self.0
    }
}

impl Dataset for InMemory {
    fn len(&self) -> usize {
        self.0.len()
    }

    fn get(&self, index: usize) -> Result<Tensor<f32>> {
        self.0
            .get(index)
            .cloned()
            .ok_or_else(|| Error::range(format!("index {index} out of {} items", self.0.len())))
    }
}
