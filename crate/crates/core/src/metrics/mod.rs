//! Continuity metrics over intensity trajectories (AL/Rg, RL/Sm), domain
//! accuracy, FID, and low-level image metrics.

mod fid;
mod image;
mod report;

pub use self::image::{akld, histogram, kl_divergence, mse, psnr, psnr_from_mse, ssim, AKLD_BINS, AKLD_EPS, PSNR_CAP};
pub use fid::{fid_harness, frechet_distance, ChannelStats, Embedding, FidMode, FidReport};
pub use report::{evaluate_trajectory, EvalReport, ItemMetrics};

use serde::{Deserialize, Serialize};

use crate::error::{Error, Result};
use crate::model::{ControlMap, Generator, ImageBatch};

/// Intensities `0.0, 0.1, …, 1.0`.
pub fn default_intensities() -> Vec<f32> {
    evenly_spaced(0.0, 1.0, 11)
}

/// `n` points from `lo` to `hi` inclusive.
pub fn evenly_spaced(lo: f32, hi: f32, n: usize) -> Vec<f32> {
    match n {
        0 => Vec::new(),
        1 => vec![lo],
        _ => (0..n)
            .map(|i| {
                let t = i as f64 / (n - 1) as f64;
                (lo as f64 + t * (hi as f64 - lo as f64)) as f32
            })
            .collect(),
    }
}

/// One input translated at increasing intensities.
#[derive(Clone, Debug)]
pub struct Trajectory {
    pub input: ImageBatch,
    pub intensities: Vec<f32>,
    pub outputs: Vec<ImageBatch>,
}

impl Trajectory {
    pub fn new(input: ImageBatch, intensities: Vec<f32>, outputs: Vec<ImageBatch>) -> Result<Self> {
        if input.len() != 1 {
            return Err(Error::shape("a trajectory has a single input image"));
        }
        if intensities.len() != outputs.len() {
            return Err(Error::shape("intensities and outputs differ in length"));
        }
        if intensities.windows(2).any(|w| w[0] >= w[1]) {
            return Err(Error::config("trajectory intensities must be strictly increasing"));
        }
        if outputs.iter().any(|o| o.shape() != input.shape()) {
            return Err(Error::shape("trajectory outputs must match the input shape"));
        }
        Ok(Trajectory {
            input,
            intensities,
            outputs,
        })
    }

    /// Translates `input` once per intensity with constant control maps.
    pub fn generate(g: &Generator<f32>, input: &ImageBatch, intensities: &[f32]) -> Result<Self> {
        let [_, _, h, w] = input.shape();
        let outputs = intensities
            .iter()
            .map(|&c| g.translate(input, &ControlMap::constant(1, h, w, c)?))
            .collect::<Result<Vec<_>>>()?;
        Trajectory::new(input.clone(), intensities.to_vec(), outputs)
    }
}

/// A distance between two images; `d(a, a) = 0`.
pub trait PerceptualDistance: Send + Sync {
    fn name(&self) -> &str;
    fn distance(&self, a: &ImageBatch, b: &ImageBatch) -> Result<f64>;
}

/// Root mean squared pixel difference.
#[derive(Clone, Copy, Debug, Default)]
pub struct PixelL2;

impl PerceptualDistance for PixelL2 {
    fn name(&self) -> &str {
        "pixel_l2"
    }

    fn distance(&self, a: &ImageBatch, b: &ImageBatch) -> Result<f64> {
        Ok(mse(a, b)?.sqrt())
    }
}

/// `scale · d(a, b)`.
pub struct Scaled<D>(pub D, pub f64);

impl<D: PerceptualDistance> PerceptualDistance for Scaled<D> {
    fn name(&self) -> &str {
        self.0.name()
    }

    fn distance(&self, a: &ImageBatch, b: &ImageBatch) -> Result<f64> {
        Ok(self.1 * self.0.distance(a, b)?)
    }
}

/// Pearson correlation; `None` when either side has zero variance or the
/// lengths differ.
pub fn pearson(x: &[f64], y: &[f64]) -> Option<f64> {
    if x.len() != y.len() || x.len() < 2 {
        return None;
    }
    let constant = |v: &[f64]| v.iter().all(|&a| a == v[0]);
    if constant(x) || constant(y) {
        return None;
    }
    let n = x.len() as f64;
    let (mx, my) = (x.iter().sum::<f64>() / n, y.iter().sum::<f64>() / n);
    let (mut sxy, mut sxx, mut syy) = (0.0, 0.0, 0.0);
    for (a, b) in x.iter().zip(y) {
        let (da, db) = (a - mx, b - my);
        sxy += da * db;
        sxx += da * da;
        syy += db * db;
    }
    if sxx == 0.0 || syy == 0.0 {
        return None;
    }
    Some((sxy / (sxx.sqrt() * syy.sqrt())).clamp(-1.0, 1.0))
}

#[derive(Clone, Copy, Debug, PartialEq, Serialize, Deserialize)]
pub struct AbsoluteLinearity {
    /// `None` when all distances are equal.
    pub al: Option<f64>,
    pub rg: f64,
}

#[derive(Clone, Copy, Debug, PartialEq, Serialize, Deserialize)]
pub struct RelativeLinearity {
    pub rl: Option<f64>,
    pub sm: f64,
}

/// AL and Rg from precomputed distances to the input.
pub fn absolute_linearity_of(intensities: &[f64], distances: &[f64]) -> Result<AbsoluteLinearity> {
    if distances.len() < 3 || intensities.len() != distances.len() {
        return Err(Error::config("absolute linearity needs at least three aligned points"));
    }
    let al = pearson(intensities, distances);
    if al.is_none() {
        log::warn!("absolute linearity undefined: distances have zero variance");
    }
    let max = distances.iter().cloned().fold(f64::MIN, f64::max);
    let min = distances.iter().cloned().fold(f64::MAX, f64::min);
    Ok(AbsoluteLinearity { al, rg: max - min })
}

/// RL and Sm from precomputed adjacent distances.
pub fn relative_linearity_of(adjacent: &[f64]) -> Result<RelativeLinearity> {
    if adjacent.len() < 2 {
        return Err(Error::config("relative linearity needs at least three points"));
    }
    let index: Vec<f64> = (0..adjacent.len()).map(|i| i as f64).collect();
    let cumulative: Vec<f64> = adjacent
        .iter()
        .scan(0.0, |s, d| {
            *s += d;
            Some(*s)
        })
        .collect();
    let rl = pearson(&index, &cumulative);
    if rl.is_none() {
        log::warn!("relative linearity undefined: cumulative distances have zero variance");
    }
    Ok(RelativeLinearity {
        rl,
        sm: adjacent.iter().cloned().fold(f64::MIN, f64::max),
    })
}

/// Distances from every output to the raw input.
pub fn distances_to_input(traj: &Trajectory, d: &dyn PerceptualDistance) -> Result<Vec<f64>> {
    traj.outputs.iter().map(|o| d.distance(o, &traj.input)).collect()
}

pub fn adjacent_distances(traj: &Trajectory, d: &dyn PerceptualDistance) -> Result<Vec<f64>> {
    traj.outputs.windows(2).map(|w| d.distance(&w[0], &w[1])).collect()
}

pub fn absolute_linearity(traj: &Trajectory, d: &dyn PerceptualDistance) -> Result<AbsoluteLinearity> {
    let c: Vec<f64> = traj.intensities.iter().map(|&v| v as f64).collect();
    absolute_linearity_of(&c, &distances_to_input(traj, d)?)
}

pub fn relative_linearity(traj: &Trajectory, d: &dyn PerceptualDistance) -> Result<RelativeLinearity> {
    relative_linearity_of(&adjacent_distances(traj, d)?)
}

/// Probability that an image belongs to the target domain.
pub trait DomainClassifier: Send + Sync {
    fn target_probability(&self, image: &ImageBatch) -> Result<f64>;
}

/// Highest target-domain confidence along the trajectory.
pub fn acc_metric(traj: &Trajectory, classifier: Option<&dyn DomainClassifier>) -> Result<f64> {
    let c = classifier.ok_or_else(|| Error::Unsupported("no domain classifier plugin configured".into()))?;
    let mut best = f64::MIN;
    for o in &traj.outputs {
        best = best.max(c.target_probability(o)?);
    }
    Ok(best)
}

#[cfg(test)]
mod tests {
    use super::*;
    use crate::autograd::Tensor;
    use proptest::prelude::*;

    fn textbook(x: &[f64], y: &[f64]) -> f64 {
        let n = x.len() as f64;
        let sx: f64 = x.iter().sum();
        let sy: f64 = y.iter().sum();
        let sxy: f64 = x.iter().zip(y).map(|(a, b)| a * b).sum();
        let sxx: f64 = x.iter().map(|a| a * a).sum();
        let syy: f64 = y.iter().map(|a| a * a).sum();
        (n * sxy - sx * sy) / ((n * sxx - sx * sx).sqrt() * (n * syy - sy * sy).sqrt())
    }

    #[test]
    fn closed_forms() {
        let c: Vec<f64> = (0..11).map(|i| i as f64 / 10.0).collect();
        let prop: Vec<f64> = c.iter().map(|v| 0.3 * v).collect();
        let r = absolute_linearity_of(&c, &prop).unwrap();
        assert!((r.al.unwrap() - 1.0).abs() < 1e-15);
        assert!((r.rg - 0.3).abs() < 1e-15);
        let dec: Vec<f64> = c.iter().map(|v| 1.0 - 2.0 * v).collect();
        assert!((absolute_linearity_of(&c, &dec).unwrap().al.unwrap() + 1.0).abs() < 1e-15);
        let r = relative_linearity_of(&[0.07; 10]).unwrap();
        assert!((r.rl.unwrap() - 1.0).abs() < 1e-15);
        assert_eq!(relative_linearity_of(&[0.01, 0.02, 0.05]).unwrap().sm, 0.05);
    }

    #[test]
    fn zero_variance_is_undefined() {
        let c = [0.0, 0.5, 1.0];
        assert_eq!(absolute_linearity_of(&c, &[0.2; 3]).unwrap().al, None);
        assert!(absolute_linearity_of(&c[..2], &[0.1, 0.2]).is_err());
    }

    #[test]
    fn intensities_default_grid() {
        let g = default_intensities();
        assert_eq!(g.len(), 11);
        assert_eq!(g[0], 0.0);
        assert_eq!(g[10], 1.0);
        assert!((g[3] - 0.3).abs() < 1e-7);
    }

    #[test]
    fn acc_plugin_contract() {
        struct Peak;
        impl DomainClassifier for Peak {
            fn target_probability(&self, image: &ImageBatch) -> Result<f64> {
                let v = image.tensor().data()[0] as f64;
                Ok(1.0 - (v - 0.5).abs())
            }
        }
        let input = ImageBatch::new(Tensor::zeros([1, 3, 16, 16])).unwrap();
        let c = default_intensities();
        let outs = c.iter().map(|&v| ImageBatch::new(Tensor::full([1, 3, 16, 16], v)).unwrap()).collect();
        let t = Trajectory::new(input, c, outs).unwrap();
        assert!((acc_metric(&t, Some(&Peak)).unwrap() - 1.0).abs() < 1e-7);
        assert!(matches!(acc_metric(&t, None), Err(Error::Unsupported(_))));
    }

    proptest! {
        #[test]
        fn pearson_matches_textbook(v in proptest::collection::vec((-10.0f64..10.0, -10.0f64..10.0), 3..40)) {
            let (x, y): (Vec<f64>, Vec<f64>) = v.into_iter().unzip();
            if let Some(r) = pearson(&x, &y) {
                prop_assert!((r - textbook(&x, &y)).abs() < 1e-9);
            }
        }

        #[test]
        fn affine_invariance(d in proptest::collection::vec(0.0f64..2.0, 11), scale in 0.1f64..10.0) {
            let c: Vec<f64> = (0..11).map(|i| i as f64 / 10.0).collect();
            let a = absolute_linearity_of(&c, &d).unwrap();
            let scaled: Vec<f64> = d.iter().map(|v| v * scale).collect();
            let b = absolute_linearity_of(&c, &scaled).unwrap();
            if let (Some(x), Some(y)) = (a.al, b.al) {
                prop_assert!((x - y).abs() < 1e-9);
            }
            prop_assert!((b.rg - scale * a.rg).abs() < 1e-9 * scale.max(1.0));
        }
    }
}
