//! Contrastive intensity sampling and the training objective: margin hinge
//! (monotonicity and domain fidelity), least-squares adversarial, cycle.

pub(crate) mod objective;
mod presets;

pub use objective::{
    adversarial_losses, confidence_delta_source, confidence_delta_target, cycle_loss,
    discriminator_objective, generator_objective, total_discriminator_loss, total_generator_loss,
    AdversarialLosses, DetachedFakes, DirectionTerms, LossBreakdown, LossContext, Networks, ObjectiveGraph, TranslationSide,
};
pub use presets::{preset, preset_names, TaskPreset};

use rand::Rng;
use serde::{Deserialize, Serialize};

use crate::autograd::{Real, Tape, Tensor, Var};
use crate::error::{Error, Result};
use crate::model::{ControlBounds, ControlMap};

#[derive(Clone, Copy, Debug, Default, PartialEq, Eq, Serialize, Deserialize)]
#[serde(rename_all = "snake_case")]
pub enum Reduction {
    #[default]
    Mean,
    Sum,
}

#[derive(Clone, Copy, Debug, Default, PartialEq, Eq, Serialize, Deserialize)]
#[serde(rename_all = "snake_case")]
pub enum AdversarialForm {
    #[default]
    LeastSquares,
}

#[derive(Clone, Copy, Debug, PartialEq, Serialize, Deserialize)]
pub struct LossWeights {
    pub lambda_cyc: f64,
    pub lambda_mn: f64,
    pub lambda_df: f64,
    pub epsilon: f64,
    #[serde(default)]
    pub adversarial_form: AdversarialForm,
    #[serde(default)]
    pub reduction: Reduction,
}

impl Default for LossWeights {
    fn default() -> Self {
        LossWeights {
            lambda_cyc: 10.0,
            lambda_mn: 1.0,
            lambda_df: 0.25,
            epsilon: 0.5,
            adversarial_form: AdversarialForm::LeastSquares,
            reduction: Reduction::Mean,
        }
    }
}

impl LossWeights {
    pub fn validate(&self) -> Result<()> {
        let all = [self.lambda_cyc, self.lambda_mn, self.lambda_df, self.epsilon];
        if all.iter().any(|v| !v.is_finite() || *v < 0.0) {
            return Err(Error::config(format!("loss weights must be finite and >= 0: {self:?}")));
        }
        Ok(())
    }
}

/// Ordered intensity pair per batch item; `low[i] < high[i]`.
#[derive(Clone, Debug, PartialEq, Serialize, Deserialize)]
pub struct ContrastivePair {
    low: Vec<f32>,
    high: Vec<f32>,
}

impl ContrastivePair {
    pub fn new(low: Vec<f32>, high: Vec<f32>) -> Result<Self> {
        if low.len() != high.len() || low.is_empty() {
            return Err(Error::shape("contrastive pair needs matching, non-empty value lists"));
        }
        for (a, b) in low.iter().zip(&high) {
            if !(a < b) || !(0.0..=1.0).contains(a) || !(0.0..=1.0).contains(b) {
                return Err(Error::range(format!("invalid contrastive pair ({a}, {b})")));
            }
        }
        Ok(ContrastivePair { low, high })
    }

    /// Bypasses the ordering check; only for degenerate-path tests where
    /// both intensities are forced equal.
    #[doc(hidden)]
    pub fn new_unchecked(low: Vec<f32>, high: Vec<f32>) -> Self {
        ContrastivePair { low, high }
    }

    pub fn len(&self) -> usize {
        self.low.len()
    }

    pub fn is_empty(&self) -> bool {
        self.low.is_empty()
    }

    pub fn low(&self) -> &[f32] {
        &self.low
    }

    pub fn high(&self) -> &[f32] {
        &self.high
    }

    pub fn low_map(&self, height: usize, width: usize) -> Result<ControlMap> {
        ControlMap::constant_per_item(&self.low, height, width, ControlBounds::UNIT)
    }

    pub fn high_map(&self, height: usize, width: usize) -> Result<ControlMap> {
        ControlMap::constant_per_item(&self.high, height, width, ControlBounds::UNIT)
    }

    /// `[low maps ; high maps]` stacked on the batch axis.
    pub(crate) fn stacked<T: Real>(&self, height: usize, width: usize) -> Tensor<T> {
        let plane = height * width;
        let n = self.low.len();
        let mut data = Vec::with_capacity(2 * n * plane);
        for &v in self.low.iter().chain(&self.high) {
            data.extend(std::iter::repeat_n(T::from_f64_lossy(v as f64), plane));
        }
        Tensor::from_vec([2 * n, 1, height, width], data)
    }
}

/// Draws one constant-valued intensity pair per batch item: two uniforms on
/// `[0, 1]`, sorted, redrawn until they differ by at least `delta_min`.
pub fn cig_sample<R: Rng + ?Sized>(rng: &mut R, batch_size: usize, delta_min: f64) -> Result<ContrastivePair> {
    if !(0.0..1.0).contains(&delta_min) {
        return Err(Error::config(format!("delta_min {delta_min} must lie in [0, 1)")));
    }
    if batch_size == 0 {
        return Err(Error::config("batch_size must be >= 1"));
    }
    let mut low = Vec::with_capacity(batch_size);
    let mut high = Vec::with_capacity(batch_size);
    for _ in 0..batch_size {
        loop {
            let a: f32 = rng.random_range(0.0..=1.0);
            let b: f32 = rng.random_range(0.0..=1.0);
            let (lo, hi) = if a <= b { (a, b) } else { (b, a) };
            // strict ordering is required even when delta_min == 0
            if hi > lo && (hi - lo) as f64 >= delta_min {
                low.push(lo);
                high.push(hi);
                break;
            }
        }
    }
    Ok(ContrastivePair { low, high })
}

/// `reduce(max(ε − Δ, 0)²)` on the tape.
pub fn hinge_margin_on<T: Real>(tape: &mut Tape<T>, delta: Var, epsilon: f64, reduction: Reduction) -> Var {
    let gap = tape.affine(delta, -1.0, epsilon);
    let gap = tape.relu(gap);
    let sq = tape.square(gap);
    match reduction {
        Reduction::Mean => tape.mean(sq),
        Reduction::Sum => tape.sum(sq),
    }
}

/// Margin hinge on a confidence gap: `reduce(max(ε − Δ, 0)²)`. Serves both
/// the monotonicity loss (target gap) and the domain-fidelity loss (source gap).
pub fn hinge_margin_loss<T: Real>(delta: &Tensor<T>, epsilon: f64, reduction: Reduction) -> f64 {
    let sum: f64 = delta
        .data()
        .iter()
        .map(|d| (epsilon - d.as_f64()).max(0.0).powi(2))
        .sum();
    match reduction {
        Reduction::Mean => sum / delta.len() as f64,
        Reduction::Sum => sum,
    }
}

/// Gradient of [`hinge_margin_loss`] with respect to `Δ`, via the tape.
pub fn hinge_margin_grad<T: Real>(delta: &Tensor<T>, epsilon: f64, reduction: Reduction) -> Tensor<T> {
    let mut tape = Tape::new();
    let d = tape.leaf(delta.clone(), true);
    let l = hinge_margin_on(&mut tape, d, epsilon, reduction);
    let mut grads = tape.backward(l);
    grads.take(d).expect("gradient for Δ")
}

/// `mean((s − target)²)`.
pub fn least_squares_on<T: Real>(tape: &mut Tape<T>, score: Var, target: f64) -> Var {
    let r = tape.affine(score, 1.0, -target);
    let sq = tape.square(r);
    tape.mean(sq)
}

/// `mean(|a − b|)`.
pub fn l1_on<T: Real>(tape: &mut Tape<T>, a: Var, b: Var) -> Var {
    let d = tape.sub(a, b);
    let d = tape.abs(d);
    tape.mean(d)
}
