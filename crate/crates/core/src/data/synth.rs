//! Synthetic domain pairs: random anti-aliased ellipses and rectangles on
//! mid-gray, scaled by a per-domain gain or corrupted with Gaussian noise.
//!
//! Rendering happens in `[0, 1]`; images are mapped to `[-1, 1]` at the end.

use rand::{Rng, SeedableRng};
use rand_chacha::ChaCha8Rng;
use rand_distr::{Distribution, Normal};
use serde::{Deserialize, Serialize};

use super::InMemory;
use crate::autograd::Tensor;
use crate::error::{Error, Result};

const BACKGROUND: f32 = 0.5;

/// A clean scene in `[0, 1]`, shape `[1, 3, size, size]`.
pub fn render_shapes(rng: &mut impl Rng, size: usize) -> Tensor<f32> {
    let mut img = Tensor::full([1, 3, size, size], BACKGROUND);
    let s = size as f32;
    for _ in 0..rng.random_range(2..=4) {
        let color: [f32; 3] = std::array::from_fn(|_| rng.random_range(0.15..0.85));
        let (cx, cy) = (rng.random_range(0.15..0.85) * s, rng.random_range(0.15..0.85) * s);
        let (rx, ry) = (rng.random_range(0.08..0.3) * s, rng.random_range(0.08..0.3) * s);
        let ellipse = rng.random_bool(0.5);
        for y in 0..size {
            for x in 0..size {
                let (dx, dy) = (x as f32 + 0.5 - cx, y as f32 + 0.5 - cy);
                // approximate signed distance in pixels
                let sd = if ellipse {
                    (((dx / rx).powi(2) + (dy / ry).powi(2)).sqrt() - 1.0) * rx.min(ry)
                } else {
                    (dx.abs() - rx).max(dy.abs() - ry)
                };
                let alpha = (0.5 - sd).clamp(0.0, 1.0);
                if alpha > 0.0 {
                    for (c, &col) in color.iter().enumerate() {
                        let p = img.get([0, c, y, x]);
                        img.set([0, c, y, x], p + alpha * (col - p));
                    }
                }
            }
        }
    }
    img
}

/// Unit-range scene to `[-1, 1]`.
fn to_signed(t: &Tensor<f32>) -> Tensor<f32> {
    t.map(|v| v.clamp(0.0, 1.0) * 2.0 - 1.0)
}

#[derive(Clone, Debug, PartialEq, Serialize, Deserialize)]
#[serde(tag = "kind", rename_all = "snake_case")]
pub enum DomainTask {
    Brightness { x_gain: f32, y_gain: f32 },
    Noise { x_sigma: f32, y_sigma: f32 },
    Folder { path_x: std::path::PathBuf, path_y: std::path::PathBuf },
}

#[derive(Clone, Debug, PartialEq, Serialize, Deserialize)]
pub struct DomainPairSpec {
    pub task: DomainTask,
    pub image_size: usize,
    /// Images per domain for synthetic tasks; unused for folders.
    #[serde(default)]
    pub count: usize,
    #[serde(default)]
    pub seed: u64,
}

impl DomainPairSpec {
    pub fn brightness(x_gain: f32, y_gain: f32, image_size: usize, count: usize, seed: u64) -> Self {
        DomainPairSpec {
            task: DomainTask::Brightness { x_gain, y_gain },
            image_size,
            count,
            seed,
        }
    }

    pub fn validate(&self) -> Result<()> {
        if self.count == 0 || self.image_size == 0 {
            return Err(Error::config("count and image_size must be at least 1"));
        }
        match self.task {
            DomainTask::Brightness { x_gain, y_gain } if !(x_gain > 0.0 && y_gain > 0.0) => {
                Err(Error::config("brightness gains must be positive"))
            }
            DomainTask::Noise { x_sigma, y_sigma } if !(x_sigma >= 0.0 && y_sigma >= 0.0) => {
                Err(Error::config("noise sigmas must be non-negative"))
            }
            _ => Ok(()),
        }
    }
}

/// Unpaired train/test sets of both domains plus paired held-out items.
#[derive(Clone, Debug)]
pub struct SyntheticPair {
    pub train_x: InMemory,
    pub train_y: InMemory,
    pub test_x: InMemory,
    pub test_y: InMemory,
}

impl SyntheticPair {
    pub fn domain_x(&self) -> impl Iterator<Item = &Tensor<f32>> {
        self.train_x.items().iter().chain(self.test_x.items())
    }

    pub fn domain_y(&self) -> impl Iterator<Item = &Tensor<f32>> {
        self.train_y.items().iter().chain(self.test_y.items())
    }
}

fn apply(task: &DomainTask, clean: &Tensor<f32>, x_side: bool, rng: &mut ChaCha8Rng) -> Tensor<f32> {
    match *task {
        DomainTask::Brightness { x_gain, y_gain } => {
            let g = if x_side { x_gain } else { y_gain };
            to_signed(&clean.map(|v| v * g))
        }
        DomainTask::Noise { x_sigma, y_sigma } => {
            let s = if x_side { x_sigma } else { y_sigma };
            if s == 0.0 {
                return to_signed(clean);
            }
            let n = Normal::new(0.0, s).expect("finite sigma");
            let mut out = clean.clone();
            for v in out.data_mut() {
                *v += n.sample(rng);
            }
            to_signed(&out)
        }
        DomainTask::Folder { .. } => unreachable!("folder tasks are not synthesized"),
    }
}

/// Generates `count` images per domain; the last 10% (at least one) of
/// each domain form the test split. Domains use independent scene streams,
/// so the pair is unpaired.
pub fn synth_generate(spec: &DomainPairSpec) -> Result<SyntheticPair> {
    spec.validate()?;
    if matches!(spec.task, DomainTask::Folder { .. }) {
        return Err(Error::config("folder tasks are loaded with load_folder"));
    }
    let domain = |stream: u64, x_side: bool| {
        let mut rng = ChaCha8Rng::seed_from_u64(spec.seed);
        rng.set_stream(stream);
        (0..spec.count)
            .map(|_| {
                let clean = render_shapes(&mut rng, spec.image_size);
                apply(&spec.task, &clean, x_side, &mut rng)
            })
            .collect::<Vec<_>>()
    };
    let xs = domain(1, true);
    let ys = domain(2, false);
    let n_test = if spec.count < 2 { 0 } else { (spec.count / 10).max(1) };
    let split = |mut v: Vec<Tensor<f32>>| {
        let test = v.split_off(v.len() - n_test);
        (InMemory::new(v), InMemory::new(test))
    };
    let (train_x, test_x) = split(xs);
    let (train_y, test_y) = split(ys);
    Ok(SyntheticPair {
        train_x,
        train_y,
        test_x,
        test_y,
    })
}

/// A held-out source image with a reference rendered from the same scene at
/// an intermediate gain `x_gain + t (y_gain − x_gain)`.
#[derive(Clone, Debug)]
pub struct PairedItem {
    pub source: Tensor<f32>,
    pub reference: Tensor<f32>,
    pub t: f32,
}

/// Paired brightness items with `t` drawn uniformly from `t_range`. Uses a
/// stream disjoint from [`synth_generate`].
pub fn synth_paired(
    x_gain: f32,
    y_gain: f32,
    t_range: (f32, f32),
    image_size: usize,
    count: usize,
    seed: u64,
) -> Result<Vec<PairedItem>> {
    if !(x_gain > 0.0 && y_gain > 0.0) || !(0.0..=1.0).contains(&t_range.0) || !(t_range.0 <= t_range.1 && t_range.1 <= 1.0)
    {
        return Err(Error::config("invalid gains or t range"));
    }
    let mut rng = ChaCha8Rng::seed_from_u64(seed);
    rng.set_stream(3);
    Ok((0..count)
        .map(|_| {
            let clean = render_shapes(&mut rng, image_size);
            let t = if t_range.0 == t_range.1 {
                t_range.0
            } else {
                rng.random_range(t_range.0..=t_range.1)
            };
            let g = x_gain + t * (y_gain - x_gain);
            PairedItem {
                source: to_signed(&clean.map(|v| v * x_gain)),
                reference: to_signed(&clean.map(|v| v * g)),
                t,
            }
        })
        .collect())
}

#[cfg(test)]
mod tests {
    use super::*;
    use crate::data::Dataset;

    fn unit_mean<'a>(items: impl Iterator<Item = &'a Tensor<f32>>) -> f64 {
        let (mut s, mut n) = (0.0, 0usize);
        for t in items {
            s += t.data().iter().map(|&v| (v as f64 + 1.0) / 2.0).sum::<f64>();
            n += t.len();
        }
        s / n as f64
    }

    #[test]
    fn brightness_ratio_follows_gains() {
        let p = synth_generate(&DomainPairSpec::brightness(0.3, 1.0, 32, 40, 1)).unwrap();
        let ratio = unit_mean(p.domain_y()) / unit_mean(p.domain_x());
        assert!((ratio / (1.0 / 0.3) - 1.0).abs() < 0.05, "{ratio}");
    }

    #[test]
    fn same_seed_same_data() {
        let spec = DomainPairSpec::brightness(0.3, 1.0, 16, 10, 5);
        let (a, b) = (synth_generate(&spec).unwrap(), synth_generate(&spec).unwrap());
        assert_eq!(a.train_x.items(), b.train_x.items());
        assert_eq!(a.test_y.items(), b.test_y.items());
        let c = synth_generate(&DomainPairSpec { seed: 6, ..spec }).unwrap();
        assert_ne!(a.train_x.items(), c.train_x.items());
    }

    #[test]
    fn split_is_ninety_ten() {
        let p = synth_generate(&DomainPairSpec::brightness(0.3, 1.0, 16, 50, 0)).unwrap();
        assert_eq!((p.train_x.len(), p.test_x.len()), (45, 5));
    }

    #[test]
    fn noise_residual_std() {
        let spec = DomainPairSpec {
            task: DomainTask::Noise { x_sigma: 0.0, y_sigma: 0.1 },
            image_size: 32,
            count: 20,
            seed: 3,
        };
        let p = synth_generate(&spec).unwrap();
        // recover the clean scenes from the same stream
        let mut rng = ChaCha8Rng::seed_from_u64(3);
        rng.set_stream(2);
        let mut sq = 0.0;
        let mut n = 0usize;
        for y in p.domain_y() {
            let clean = render_shapes(&mut rng, 32);
            for _ in 0..clean.len() {
                // consume the noise draws the generator made
                let _: f32 = Normal::new(0.0, 0.1f32).unwrap().sample(&mut rng);
            }
            for (a, b) in y.data().iter().zip(clean.data()) {
                let r = (a + 1.0) / 2.0 - b;
                sq += (r as f64).powi(2);
                n += 1;
            }
        }
        let std = (sq / n as f64).sqrt();
        assert!((std - 0.1).abs() < 0.005, "{std}");
    }

    #[test]
    fn paired_reference_sits_between_domains() {
        let items = synth_paired(0.3, 1.0, (0.5, 0.5), 16, 3, 2).unwrap();
        for it in &items {
            let src = unit_mean(std::iter::once(&it.source));
            let r = unit_mean(std::iter::once(&it.reference));
            assert!((r / src - 0.65 / 0.3).abs() < 0.01);
        }
    }

    #[test]
    fn invalid_specs_are_rejected() {
        assert!(synth_generate(&DomainPairSpec::brightness(0.0, 1.0, 16, 4, 0)).is_err());
        assert!(synth_generate(&DomainPairSpec::brightness(0.3, 1.0, 16, 0, 0)).is_err());
    }
}
