//! End-to-end checks on the synthetic brightness task: how monotonic and
//! how searchable a trained generator is on held-out data.

use rand::SeedableRng;
use rand_chacha::ChaCha8Rng;
use serde::{Deserialize, Serialize};

use crate::data::{synth_paired, Dataset, InMemory};
use crate::error::{Error, Result};
use crate::inference::{exhaustive_infer, ternary_infer, PsnrToReference};
use crate::losses::{cig_sample, confidence_delta_target};
use crate::metrics::{absolute_linearity, default_intensities, relative_linearity, PixelL2, Trajectory};
use crate::model::{ControlBounds, Discriminator, Generator, ImageBatch};

#[derive(Clone, Debug, Serialize, Deserialize)]
pub struct ToyEvalConfig {
    /// Random contrastive pairs drawn per held-out image.
    pub pairs_per_item: usize,
    pub ternary_iterations: usize,
    pub grid_points: usize,
    /// Tolerance on `|c_ternary − c_exhaustive|`.
    pub search_tolerance: f64,
    pub paired_items: usize,
    pub paired_t_range: (f32, f32),
    pub seed: u64,
}

impl Default for ToyEvalConfig {
    fn default() -> Self {
        ToyEvalConfig {
            pairs_per_item: 4,
            ternary_iterations: 7,
            grid_points: 11,
            search_tolerance: 0.15,
            paired_items: 20,
            paired_t_range: (0.2, 0.8),
            seed: 1234,
        }
    }
}

#[derive(Clone, Debug, Serialize, Deserialize)]
pub struct ToyEvalReport {
    /// Fraction of contrastive pairs with positive mean target-confidence gap.
    pub delta_positive_fraction: f64,
    pub pairs: usize,
    pub al_mean: f64,
    pub rl_mean: f64,
    pub rg_mean: f64,
    pub sm_mean: f64,
    /// Fraction of paired items where ternary lands within tolerance of the
    /// exhaustive best.
    pub search_agreement: f64,
    pub search_gaps: Vec<f64>,
}

fn mean(v: &[f64]) -> f64 {
    v.iter().sum::<f64>() / v.len().max(1) as f64
}

/// Evaluates `g` (translating into the domain judged by `d_target`) on the
/// held-out images and on freshly drawn paired brightness items.
pub fn evaluate_toy(
    g: &Generator<f32>,
    d_target: &Discriminator<f32>,
    held_out: &InMemory,
    gains: (f32, f32),
    cfg: &ToyEvalConfig,
) -> Result<ToyEvalReport> {
    if held_out.is_empty() {
        return Err(Error::config("toy evaluation needs held-out images"));
    }
    let mut rng = ChaCha8Rng::seed_from_u64(cfg.seed);
    let (mut positive, mut pairs) = (0usize, 0usize);
    let (mut al, mut rl, mut rg, mut sm) = (Vec::new(), Vec::new(), Vec::new(), Vec::new());
    for i in 0..held_out.len() {
        let x = ImageBatch::new(held_out.get(i)?)?;
        for _ in 0..cfg.pairs_per_item {
            let pair = cig_sample(&mut rng, 1, 0.0)?;
            if confidence_delta_target(d_target, g, &x, &pair)?.mean() > 0.0 {
                positive += 1;
            }
            pairs += 1;
        }
        let traj = Trajectory::generate(g, &x, &default_intensities())?;
        let a = absolute_linearity(&traj, &PixelL2)?;
        let r = relative_linearity(&traj, &PixelL2)?;
        al.push(a.al.unwrap_or(0.0));
        rl.push(r.rl.unwrap_or(0.0));
        rg.push(a.rg);
        sm.push(r.sm);
    }
    let size = held_out.get(0)?.height();
    let paired = synth_paired(gains.0, gains.1, cfg.paired_t_range, size, cfg.paired_items, cfg.seed)?;
    let mut gaps = Vec::with_capacity(paired.len());
    for item in &paired {
        let x = ImageBatch::new(item.source.clone())?;
        let reference = ImageBatch::new(item.reference.clone())?;
        let ex = exhaustive_infer(g, &x, Some(&reference), &PsnrToReference, cfg.grid_points, ControlBounds::UNIT)?;
        let te = ternary_infer(g, &x, Some(&reference), &PsnrToReference, cfg.ternary_iterations, ControlBounds::UNIT)?;
        gaps.push((te.result.c_star - ex.result.c_star).abs());
    }
    let within = gaps.iter().filter(|&&d| d <= cfg.search_tolerance).count();
    Ok(ToyEvalReport {
        delta_positive_fraction: positive as f64 / pairs as f64,
        pairs,
        al_mean: mean(&al),
        rl_mean: mean(&rl),
        rg_mean: mean(&rg),
        sm_mean: mean(&sm),
        search_agreement: within as f64 / gaps.len().max(1) as f64,
        search_gaps: gaps,
    })
}
