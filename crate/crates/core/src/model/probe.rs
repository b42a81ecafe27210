//! Checks whether a single conv → (nonlinearity) → norm block can tell two
//! constant control maps apart.
//!
//! With a linear path into instance norm, a constant control map only adds
//! a per-channel constant to the conv output, and the norm subtracts it
//! again. The block uses valid (unpadded) convolution so the offset is
//! exactly uniform over the output plane.

use rand::{Rng, SeedableRng};
use rand_chacha::ChaCha8Rng;
use serde::Serialize;

use super::generator::{init_params, NORM_EPS};
use super::spec::{ConvLayer, InitScheme, NormMode, Nonlinearity};
use crate::autograd::{Tape, Tensor};

/// Outputs closer than this count as identical.
pub const DEGENERACY_TOL: f64 = 1e-5;

#[derive(Clone, Copy, Debug, PartialEq, Serialize)]
pub struct ProbeReport {
    pub degenerate: bool,
    pub max_abs_diff: f64,
}

pub fn in_degeneracy_probe(
    norm_mode: NormMode,
    nonlinearity: Nonlinearity,
    c_a: f64,
    c_b: f64,
    seed: u64,
) -> ProbeReport {
    const SIZE: usize = 16;
    const CHANNELS: usize = 8;
    let layer = ConvLayer::new("probe", 4, CHANNELS, 3, 1, 0);
    let params = init_params::<f64>(std::slice::from_ref(&layer), InitScheme::HeNormal { slope: 0.2 }, seed);
    let mut rng = ChaCha8Rng::seed_from_u64(seed ^ 0x9e37_79b9_7f4a_7c15);
    // one shared image, two constant control channels
    let image = Tensor::from_fn([1, 3, SIZE, SIZE], |_| rng.random_range(-1.0..1.0));
    let input = |c: f64| {
        Tensor::from_fn([1, 4, SIZE, SIZE], |[n, ch, h, w]| {
            if ch == 3 {
                c
            } else {
                image.get([n, ch, h, w])
            }
        })
    };
    let run = |c: f64| {
        let mut tape = Tape::new();
        let bound = params.bind(&mut tape, false);
        let x = tape.constant(input(c));
        let mut y = tape.conv2d(x, bound.var(0), Some(bound.var(1)), 1, 0);
        if let Nonlinearity::LeakyRelu(s) = nonlinearity {
            y = tape.leaky_relu(y, s);
        }
        y = match norm_mode {
            NormMode::Identity => y,
            NormMode::Instance => tape.normalize(y, true, NORM_EPS),
            NormMode::Batch => tape.normalize(y, false, NORM_EPS),
        };
        tape.value(y).clone()
    };
    let max_abs_diff = run(c_a).max_abs_diff(&run(c_b));
    ProbeReport {
        degenerate: max_abs_diff < DEGENERACY_TOL,
        max_abs_diff,
    }
}

#[cfg(test)]
mod tests {
    use super::*;

    #[test]
    fn linear_path_into_instance_norm_is_blind_to_control() {
        for seed in 0..20 {
            let r = in_degeneracy_probe(NormMode::Instance, Nonlinearity::None, 0.2, 0.8, seed);
            assert!(r.degenerate, "seed {seed}: {r:?}");
        }
    }

    #[test]
    fn leaky_relu_before_instance_norm_keeps_control() {
        for seed in 0..20 {
            let r = in_degeneracy_probe(NormMode::Instance, Nonlinearity::LeakyRelu(0.2), 0.2, 0.8, seed);
            assert!(!r.degenerate, "seed {seed}: {r:?}");
        }
    }

    #[test]
    fn identity_norm_keeps_linear_offset() {
        let r = in_degeneracy_probe(NormMode::Identity, Nonlinearity::None, 0.2, 0.8, 0);
        assert!(!r.degenerate);
    }
}
