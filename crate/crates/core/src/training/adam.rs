use serde::{Deserialize, Serialize};

use crate::autograd::Tensor;
use crate::model::Params;

#[derive(Clone, Copy, Debug, PartialEq, Serialize, Deserialize)]
pub struct AdamConfig {
    pub beta1: f64,
    pub beta2: f64,
    pub eps: f64,
}

/// First and second moments of one network, plus the update count.
#[derive(Clone, Debug, PartialEq)]
pub struct Adam {
    pub m: Params<f32>,
    pub v: Params<f32>,
    pub t: u64,
}

impl Adam {
    pub fn new(params: &Params<f32>) -> Self {
        let mut m = Params::new();
        for (name, t) in params.iter() {
            m.insert(name, Tensor::zeros(t.shape()));
        }
        Adam { v: m.clone(), m, t: 0 }
    }

    /// Updated parameters and moments, without touching `self` or `params`.
    pub fn propose(&self, params: &Params<f32>, grads: &[Tensor<f32>], lr: f64, cfg: AdamConfig) -> (Params<f32>, Adam) {
        let mut next = self.clone();
        let mut out = params.clone();
        next.t += 1;
        let t = next.t as i32;
        let bc1 = 1.0 - cfg.beta1.powi(t);
        let bc2 = 1.0 - cfg.beta2.powi(t);
        let (b1, b2) = (cfg.beta1 as f32, cfg.beta2 as f32);
        let step = (lr / bc1) as f32;
        let sqrt_bc2 = bc2.sqrt() as f32;
        let eps = cfg.eps as f32;
        for (i, g) in grads.iter().enumerate() {
            let m = next.m.tensors_mut()[i].data_mut();
            let v = next.v.tensors_mut()[i].data_mut();
            let p = out.tensors_mut()[i].data_mut();
            for (((p, m), v), &g) in p.iter_mut().zip(m).zip(v).zip(g.data()) {
                *m = b1 * *m + (1.0 - b1) * g;
                *v = b2 * *v + (1.0 - b2) * g * g;
                *p -= step * *m / (v.sqrt() / sqrt_bc2 + eps);
            }
        }
        (out, next)
    }
}

/// Scales `grads` in place so their global L2 norm is at most `max_norm`.
pub fn clip_global_norm(grads: &mut [Tensor<f32>], max_norm: f64) -> f64 {
    let norm = grads
        .iter()
        .flat_map(|g| g.data())
        .map(|&v| (v as f64) * (v as f64))
        .sum::<f64>()
        .sqrt();
    if norm > max_norm && norm > 0.0 {
        let s = (max_norm / norm) as f32;
        for g in grads.iter_mut() {
            for v in g.data_mut() {
                *v *= s;
            }
        }
    }
    norm
}

#[cfg(test)]
mod tests {
    use super::*;

    #[test]
    fn first_step_moves_by_lr_against_the_gradient_sign() {
        let mut p = Params::new();
        p.insert("w", Tensor::from_vec([1, 1, 1, 3], vec![1.0, -2.0, 0.5]));
        let adam = Adam::new(&p);
        let g = Tensor::from_vec([1, 1, 1, 3], vec![0.3, -4.0, 0.0]);
        let cfg = AdamConfig { beta1: 0.5, beta2: 0.9, eps: 1e-8 };
        let (q, next) = adam.propose(&p, &[g], 0.1, cfg);
        let d = q.tensors()[0].data();
        assert!((d[0] - 0.9).abs() < 1e-5 && (d[1] + 1.9).abs() < 1e-5 && d[2] == 0.5);
        assert_eq!(next.t, 1);
        assert_eq!(adam.t, 0);
    }

    #[test]
    fn minimizes_a_quadratic() {
        let mut p = Params::new();
        p.insert("w", Tensor::from_vec([1, 1, 1, 1], vec![3.0]));
        let mut adam = Adam::new(&p);
        let cfg = AdamConfig { beta1: 0.5, beta2: 0.9, eps: 1e-8 };
        for _ in 0..500 {
            let w = p.tensors()[0].data()[0];
            let g = Tensor::from_vec([1, 1, 1, 1], vec![2.0 * (w - 1.0)]);
            let (q, a) = adam.propose(&p, &[g], 0.05, cfg);
            p = q;
            adam = a;
        }
        assert!((p.tensors()[0].data()[0] - 1.0).abs() < 1e-2);
    }

    #[test]
    fn clipping_caps_the_norm() {
        let mut g = vec![Tensor::from_vec([1, 1, 1, 2], vec![3.0, 4.0])];
        assert_eq!(clip_global_norm(&mut g, 1.0), 5.0);
        assert!((g[0].data()[0] - 0.6).abs() < 1e-6);
    }
}
