//! Low-level image quality metrics.

use crate::error::{Error, Result};
use crate::model::ImageBatch;

/// PSNR returned for identical images.
pub const PSNR_CAP: f64 = 100.0;

fn same_shape(a: &ImageBatch, b: &ImageBatch) -> Result<()> {
    if a.shape() != b.shape() {
        return Err(Error::shape(format!("images differ in shape: {:?} vs {:?}", a.shape(), b.shape())));
    }
    Ok(())
}

pub fn mse(a: &ImageBatch, b: &ImageBatch) -> Result<f64> {
    same_shape(a, b)?;
    let (x, y) = (a.tensor().data(), b.tensor().data());
    Ok(x.iter().zip(y).map(|(p, q)| ((p - q) as f64).powi(2)).sum::<f64>() / x.len() as f64)
}

/// `10 log10(max_val² / MSE)`, capped at [`PSNR_CAP`]. Images in `[-1, 1]`
/// have `max_val = 2`.
pub fn psnr(a: &ImageBatch, b: &ImageBatch, max_val: f64) -> Result<f64> {
    Ok(psnr_from_mse(mse(a, b)?, max_val))
}

pub fn psnr_from_mse(mse: f64, max_val: f64) -> f64 {
    if mse <= 0.0 {
        return PSNR_CAP;
    }
    (10.0 * (max_val * max_val / mse).log10()).min(PSNR_CAP)
}

const SSIM_SIGMA: f64 = 1.5;
const SSIM_RADIUS: usize = 5;

fn gaussian_kernel() -> [f64; 2 * SSIM_RADIUS + 1] {
    let mut k = [0.0; 2 * SSIM_RADIUS + 1];
    for (i, v) in k.iter_mut().enumerate() {
        let d = i as f64 - SSIM_RADIUS as f64;
        *v = (-d * d / (2.0 * SSIM_SIGMA * SSIM_SIGMA)).exp();
    }
    let s: f64 = k.iter().sum();
    k.map(|v| v / s)
}

/// Half-sample symmetric index (`d c b a | a b c d`).
fn reflect(i: isize, n: usize) -> usize {
    let n = n as isize;
    let mut i = i;
    loop {
        if i < 0 {
            i = -i - 1;
        } else if i >= n {
            i = 2 * n - i - 1;
        } else {
            return i as usize;
        }
    }
}

fn blur(img: &[f64], h: usize, w: usize, k: &[f64]) -> Vec<f64> {
    let r = (k.len() / 2) as isize;
    let mut tmp = vec![0.0; h * w];
    for y in 0..h {
        for x in 0..w {
            tmp[y * w + x] = k
                .iter()
                .enumerate()
                .map(|(j, kv)| kv * img[y * w + reflect(x as isize + j as isize - r, w)])
                .sum();
        }
    }
    let mut out = vec![0.0; h * w];
    for y in 0..h {
        for x in 0..w {
            out[y * w + x] = k
                .iter()
                .enumerate()
                .map(|(j, kv)| kv * tmp[reflect(y as isize + j as isize - r, h) * w + x])
                .sum();
        }
    }
    out
}

/// Mean SSIM with an 11x11 Gaussian window (σ = 1.5), K1 = 0.01, K2 = 0.03,
/// reflect padding, and the border of half a window excluded from the mean.
/// Averaged over channels and batch items. `data_range` is 2 for `[-1, 1]`.
pub fn ssim(a: &ImageBatch, b: &ImageBatch, data_range: f64) -> Result<f64> {
    same_shape(a, b)?;
    let [n, c, h, w] = a.shape();
    if h <= 2 * SSIM_RADIUS || w <= 2 * SSIM_RADIUS {
        return Err(Error::shape("images too small for the SSIM window"));
    }
    let k = gaussian_kernel();
    let (c1, c2) = ((0.01 * data_range).powi(2), (0.03 * data_range).powi(2));
    let plane = h * w;
    let mut total = 0.0;
    for i in 0..n * c {
        let x: Vec<f64> = a.tensor().data()[i * plane..(i + 1) * plane].iter().map(|&v| v as f64).collect();
        let y: Vec<f64> = b.tensor().data()[i * plane..(i + 1) * plane].iter().map(|&v| v as f64).collect();
        let prod = |p: &[f64], q: &[f64]| p.iter().zip(q).map(|(u, v)| u * v).collect::<Vec<_>>();
        let (mx, my) = (blur(&x, h, w, &k), blur(&y, h, w, &k));
        let (xx, yy, xy) = (blur(&prod(&x, &x), h, w, &k), blur(&prod(&y, &y), h, w, &k), blur(&prod(&x, &y), h, w, &k));
        let mut sum = 0.0;
        let mut count = 0usize;
        for r in SSIM_RADIUS..h - SSIM_RADIUS {
            for col in SSIM_RADIUS..w - SSIM_RADIUS {
                let j = r * w + col;
                let (ux, uy) = (mx[j], my[j]);
                let vx = xx[j] - ux * ux;
                let vy = yy[j] - uy * uy;
                let cov = xy[j] - ux * uy;
                sum += ((2.0 * ux * uy + c1) * (2.0 * cov + c2)) / ((ux * ux + uy * uy + c1) * (vx + vy + c2));
                count += 1;
            }
        }
        total += sum / count as f64;
    }
    Ok(total / (n * c) as f64)
}

/// `Σ p ln(p / q)` over paired bins.
pub fn kl_divergence(p: &[f64], q: &[f64]) -> f64 {
    p.iter().zip(q).filter(|(pi, _)| **pi > 0.0).map(|(pi, qi)| pi * (pi / qi).ln()).sum()
}

pub const AKLD_BINS: usize = 256;
pub const AKLD_EPS: f64 = 1e-8;

/// Histogram density of values over `[-1, 1]` with `bins` uniform bins;
/// values outside are clamped into the end bins. Every bin gets `eps` added
/// before normalization.
pub fn histogram(values: impl Iterator<Item = f64>, bins: usize, eps: f64) -> Vec<f64> {
    let mut h = vec![0.0; bins];
    for v in values {
        let i = (((v + 1.0) / 2.0) * bins as f64).floor().clamp(0.0, bins as f64 - 1.0) as usize;
        h[i] += 1.0;
    }
    for v in h.iter_mut() {
        *v += eps;
    }
    let s: f64 = h.iter().sum();
    h.iter().map(|v| v / s).collect()
}

/// Average over batch items of `KL(hist(ref − clean) ‖ hist(gen − clean))`.
pub fn akld(generated: &ImageBatch, reference: &ImageBatch, clean: &ImageBatch, bins: usize) -> Result<f64> {
    same_shape(generated, reference)?;
    same_shape(generated, clean)?;
    if bins < 2 {
        return Err(Error::config("akld needs at least two bins"));
    }
    let n = generated.len();
    let per = generated.tensor().len() / n;
    let mut total = 0.0;
    for i in 0..n {
        let span = i * per..(i + 1) * per;
        let residual = |t: &ImageBatch| {
            let (d, c) = (&t.tensor().data()[span.clone()], &clean.tensor().data()[span.clone()]);
            let values: Vec<f64> = d.iter().zip(c).map(|(a, b)| (a - b) as f64).collect();
            values
        };
        let rg = residual(reference);
        let gg = residual(generated);
        let occupied = |v: &[f64]| histogram(v.iter().copied(), bins, 0.0).iter().filter(|p| **p > 0.0).count();
        if occupied(&rg) <= 1 && occupied(&gg) <= 1 {
            log::warn!("akld: item {i} has single-bin residual histograms");
        }
        let p = histogram(rg.into_iter(), bins, AKLD_EPS);
        let q = histogram(gg.into_iter(), bins, AKLD_EPS);
        total += kl_divergence(&p, &q);
    }
    Ok(total / n as f64)
}
