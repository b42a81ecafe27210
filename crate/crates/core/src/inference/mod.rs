//! Choosing a translation intensity at test time: exhaustive grid search,
//! ternary search, or a learned expert. Also control-map construction.

mod control;
mod expert;
mod search;

pub use control::{control_from_json, control_from_png, make_control_map, ControlRecipe};
pub use expert::{expert_infer, train_expert, Expert, ExpertConfig, PairedSample};
pub use search::{
    exhaustive_infer, exhaustive_search, ternary_infer, ternary_search, SearchOutcome, SearchResult, TraceStep,
};

use crate::error::{Error, Result};
use crate::metrics::{akld, psnr, AKLD_BINS};
use crate::model::{ControlMap, Generator, ImageBatch};

/// Anything that maps an image and a control map to a translated image.
pub trait Translator: Send + Sync {
    fn translate(&self, image: &ImageBatch, control: &ControlMap) -> Result<ImageBatch>;
}

impl Translator for Generator<f32> {
    fn translate(&self, image: &ImageBatch, control: &ControlMap) -> Result<ImageBatch> {
        Generator::translate(self, image, control)
    }
}

/// Returns the input unchanged, whatever the control.
#[derive(Clone, Copy, Debug, Default)]
pub struct PassThrough;

impl Translator for PassThrough {
    fn translate(&self, image: &ImageBatch, control: &ControlMap) -> Result<ImageBatch> {
        let [n, _, h, w] = image.shape();
        if control.shape() != [n, 1, h, w] {
            return Err(Error::shape("control map does not match the image"));
        }
        Ok(image.clone())
    }
}

/// Scores a candidate translation; higher is better.
pub trait AestheticCriterion: Send + Sync {
    fn name(&self) -> &str;

    fn needs_reference(&self) -> bool {
        true
    }

    fn score(&self, candidate: &ImageBatch, input: &ImageBatch, reference: Option<&ImageBatch>) -> Result<f64>;
}

fn require<'a>(reference: Option<&'a ImageBatch>, name: &str) -> Result<&'a ImageBatch> {
    reference.ok_or_else(|| Error::config(format!("criterion {name} needs a reference image")))
}

/// PSNR against the reference, images in `[-1, 1]`.
#[derive(Clone, Copy, Debug, Default)]
pub struct PsnrToReference;

impl AestheticCriterion for PsnrToReference {
    fn name(&self) -> &str {
        "psnr_to_reference"
    }

    fn score(&self, candidate: &ImageBatch, _input: &ImageBatch, reference: Option<&ImageBatch>) -> Result<f64> {
        psnr(candidate, require(reference, self.name())?, 2.0)
    }
}

/// Negated AKLD between the candidate's and the reference's residuals
/// against the input.
#[derive(Clone, Copy, Debug, Default)]
pub struct NegativeAkldToReference;

impl AestheticCriterion for NegativeAkldToReference {
    fn name(&self) -> &str {
        "negative_akld_to_reference"
    }

    fn score(&self, candidate: &ImageBatch, input: &ImageBatch, reference: Option<&ImageBatch>) -> Result<f64> {
        Ok(-akld(candidate, require(reference, self.name())?, input, AKLD_BINS)?)
    }
}

pub const CRITERIA: [&str; 2] = ["psnr_to_reference", "negative_akld_to_reference"];

pub fn criterion(name: &str) -> Result<Box<dyn AestheticCriterion>> {
    match name {
        "psnr_to_reference" | "psnr" => Ok(Box::new(PsnrToReference)),
        "negative_akld_to_reference" | "akld" => Ok(Box::new(NegativeAkldToReference)),
        other => Err(Error::config(format!("unknown criterion {other:?}; known: {}", CRITERIA.join(", ")))),
    }
}

/// Translates with a constant map at `c`.
pub fn translate_constant(g: &dyn Translator, image: &ImageBatch, c: f32, bounds: crate::model::ControlBounds) -> Result<ImageBatch> {
    let [n, _, h, w] = image.shape();
    let map = ControlMap::constant_per_item(&vec![c; n], h, w, bounds)?;
    g.translate(image, &map)
}
