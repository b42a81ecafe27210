//! Fréchet distance between Gaussian fits of embeddings.

use nalgebra::{DMatrix, DVector, SymmetricEigen};
use serde::{Deserialize, Serialize};

use super::Trajectory;
use crate::error::{Error, Result};
use crate::model::ImageBatch;

/// Maps an image to a feature vector. Stands in for a pretrained network.
pub trait Embedding: Send + Sync {
    fn name(&self) -> &str;
    fn embed(&self, image: &ImageBatch) -> Result<Vec<f64>>;
}

/// Per-channel mean and standard deviation plus per-channel means of a 2x2
/// grid: an 18-dimensional, dependency-free embedding.
#[derive(Clone, Copy, Debug, Default)]
pub struct ChannelStats;

impl Embedding for ChannelStats {
    fn name(&self) -> &str {
        "channel_stats"
    }

    fn embed(&self, image: &ImageBatch) -> Result<Vec<f64>> {
        let t = image.tensor();
        let [_, c, h, w] = t.shape();
        let mut out = Vec::with_capacity(6 * c);
        for ch in 0..c {
            let plane = &t.data()[ch * h * w..(ch + 1) * h * w];
            let mean = plane.iter().map(|&v| v as f64).sum::<f64>() / plane.len() as f64;
            let var = plane.iter().map(|&v| (v as f64 - mean).powi(2)).sum::<f64>() / plane.len() as f64;
            out.push(mean);
            out.push(var.sqrt());
            for (gy, gx) in [(0, 0), (0, 1), (1, 0), (1, 1)] {
                let mut s = 0.0;
                for y in gy * h / 2..(gy + 1) * h / 2 {
                    for x in gx * w / 2..(gx + 1) * w / 2 {
                        s += plane[y * w + x] as f64;
                    }
                }
                out.push(s / ((h / 2) * (w / 2)) as f64);
            }
        }
        Ok(out)
    }
}

#[derive(Clone, Copy, Debug, PartialEq, Eq, Serialize, Deserialize)]
#[serde(rename_all = "snake_case")]
pub enum FidMode {
    WholeTrajectory,
    LastIntensity,
}

#[derive(Clone, Copy, Debug, PartialEq, Serialize, Deserialize)]
pub struct FidReport {
    pub fid: f64,
    /// Diagonal jitter added to both covariances; 0 when none was needed.
    pub jitter: f64,
    pub candidate_pool: usize,
    pub real_pool: usize,
}

fn gaussian_fit(samples: &[Vec<f64>]) -> Result<(DVector<f64>, DMatrix<f64>)> {
    let n = samples.len();
    if n < 2 {
        return Err(Error::config("fid needs at least two samples per side"));
    }
    let d = samples[0].len();
    if d == 0 || samples.iter().any(|s| s.len() != d) {
        return Err(Error::shape("embeddings differ in dimension"));
    }
    let x = DMatrix::from_fn(n, d, |i, j| samples[i][j]);
    let mu = DVector::from_fn(d, |j, _| x.column(j).mean());
    let centered = DMatrix::from_fn(n, d, |i, j| x[(i, j)] - mu[j]);
    let cov = centered.transpose() * &centered / (n as f64 - 1.0);
    Ok((mu, cov))
}

fn sym_sqrt(m: &DMatrix<f64>) -> DMatrix<f64> {
    let e = SymmetricEigen::new(m.clone());
    let s = e.eigenvalues.map(|v| v.max(0.0).sqrt());
    &e.eigenvectors * DMatrix::from_diagonal(&s) * e.eigenvectors.transpose()
}

fn min_eigen(m: &DMatrix<f64>) -> f64 {
    SymmetricEigen::new(m.clone()).eigenvalues.min()
}

/// `‖μ1 − μ2‖² + tr(Σ1 + Σ2 − 2 (Σ1 Σ2)^½)`, using the symmetric form
/// `tr((√Σ1 Σ2 √Σ1)^½)` for the cross term.
pub fn frechet_distance(a: &[Vec<f64>], b: &[Vec<f64>]) -> Result<FidReport> {
    let (mu1, mut s1) = gaussian_fit(a)?;
    let (mu2, mut s2) = gaussian_fit(b)?;
    if mu1.len() != mu2.len() {
        return Err(Error::shape("embedding dimensions differ between sets"));
    }
    let d = mu1.len();
    let scale = (s1.trace() + s2.trace()).max(1e-300) / d as f64;
    let mut jitter = 0.0;
    if min_eigen(&s1) <= 1e-12 * scale || min_eigen(&s2) <= 1e-12 * scale {
        jitter = 1e-6 * scale;
        log::warn!("fid: singular covariance, adding {jitter:e} to the diagonal");
        for i in 0..d {
            s1[(i, i)] += jitter;
            s2[(i, i)] += jitter;
        }
    }
    let r1 = sym_sqrt(&s1);
    let inner = &r1 * &s2 * &r1;
    let inner = (&inner + inner.transpose()) * 0.5;
    let cross: f64 = SymmetricEigen::new(inner).eigenvalues.iter().map(|v| v.max(0.0).sqrt()).sum();
    let fid = (&mu1 - &mu2).norm_squared() + s1.trace() + s2.trace() - 2.0 * cross;
    Ok(FidReport {
        fid: fid.max(0.0),
        jitter,
        candidate_pool: a.len(),
        real_pool: b.len(),
    })
}

/// FID between translated images and real target images.
pub fn fid_harness(
    trajectories: &[Trajectory],
    real: &[ImageBatch],
    embedding: &dyn Embedding,
    mode: FidMode,
) -> Result<FidReport> {
    let candidates: Vec<&ImageBatch> = match mode {
        FidMode::WholeTrajectory => trajectories.iter().flat_map(|t| t.outputs.iter()).collect(),
        FidMode::LastIntensity => trajectories.iter().filter_map(|t| t.outputs.last()).collect(),
    };
    let ea = candidates.iter().map(|i| embedding.embed(i)).collect::<Result<Vec<_>>>()?;
    let eb = real.iter().map(|i| embedding.embed(i)).collect::<Result<Vec<_>>>()?;
    frechet_distance(&ea, &eb)
}

#[cfg(test)]
mod tests {
    use super::*;
    use rand::SeedableRng;
    use rand_chacha::ChaCha8Rng;
    use rand_distr::{Distribution, Normal};

    fn draws(mean: f64, n: usize, dim: usize, seed: u64) -> Vec<Vec<f64>> {
        let mut rng = ChaCha8Rng::seed_from_u64(seed);
        let d = Normal::new(mean, 1.0).unwrap();
        (0..n).map(|_| (0..dim).map(|_| d.sample(&mut rng)).collect()).collect()
    }

    #[test]
    fn identical_sets_give_zero() {
        let a = draws(0.0, 200, 5, 1);
        let r = frechet_distance(&a, &a).unwrap();
        assert!(r.fid.abs() < 1e-6, "{r:?}");
        assert_eq!(r.jitter, 0.0);
    }

    #[test]
    fn one_dimensional_gaussians() {
        let r = frechet_distance(&draws(0.0, 100_000, 1, 2), &draws(1.0, 100_000, 1, 3)).unwrap();
        assert!((r.fid - 1.0).abs() < 0.02, "{r:?}");
    }

    #[test]
    fn multivariate_matches_diagonal_closed_form() {
        // independent coordinates: fid = Σ (Δμ² + (σ1 − σ2)²)
        let mut rng = ChaCha8Rng::seed_from_u64(4);
        let n = Normal::new(0.0, 1.0).unwrap();
        let a: Vec<Vec<f64>> = (0..50_000).map(|_| vec![n.sample(&mut rng), 2.0 * n.sample(&mut rng)]).collect();
        let b: Vec<Vec<f64>> = (0..50_000).map(|_| vec![1.0 + n.sample(&mut rng), 0.5 * n.sample(&mut rng)]).collect();
        let expect = 1.0 + 0.0 + 0.0 + 1.5f64.powi(2);
        let r = frechet_distance(&a, &b).unwrap();
        assert!((r.fid - expect).abs() / expect < 0.03, "{r:?}");
    }

    #[test]
    fn singular_covariance_is_jittered() {
        let a: Vec<Vec<f64>> = (0..10).map(|i| vec![i as f64, 2.0 * i as f64]).collect();
        let r = frechet_distance(&a, &a).unwrap();
        assert!(r.jitter > 0.0 && r.fid.abs() < 1e-6, "{r:?}");
    }

    #[test]
    fn too_few_samples() {
        assert!(frechet_distance(&draws(0.0, 1, 2, 0), &draws(0.0, 5, 2, 0)).is_err());
    }
}
