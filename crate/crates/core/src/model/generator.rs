//! Control-conditioned U-Net generator.
//!
//! The control map enters as one extra input channel at the first layer.
//! Every `CLN` block is conv → leaky ReLU → normalization; the nonlinearity
//! sits in front of the norm so that instance norm cannot cancel the
//! constant offset a uniform control map adds to the first activations.

use rand::SeedableRng;
use rand_chacha::ChaCha8Rng;
use rand_distr::{Distribution, Normal};

use super::batch::{ControlMap, ImageBatch};
use super::params::{Bound, Params};
use super::spec::{ConvLayer, GeneratorSpec, InitScheme, NormMode, Nonlinearity, OutputActivation};
use crate::autograd::{Real, Tape, Tensor, Var};
use crate::error::{Error, Result};

pub(crate) const NORM_EPS: f64 = 1e-5;

/// Layer table of the generator in forward order.
pub fn generator_layers(spec: &GeneratorSpec) -> Vec<ConvLayer> {
    let c = spec.base_channels;
    let d = spec.depth;
    let mut layers = Vec::new();
    let mut cin = spec.in_channels;
    for l in 0..d {
        let cout = c << l;
        layers.push(ConvLayer::new(format!("enc{l}.conv0"), cin, cout, 3, 1, 1));
        layers.push(ConvLayer::new(format!("enc{l}.conv1"), cout, cout, 3, 1, 1));
        cin = cout;
    }
    let bottom = c << d;
    layers.push(ConvLayer::new("mid.conv0", cin, bottom, 3, 1, 1));
    layers.push(ConvLayer::new("mid.conv1", bottom, bottom, 3, 1, 1));
    for l in (0..d).rev() {
        let ch = c << (l + 1);
        layers.push(ConvLayer::new(format!("dec{l}.up"), ch, ch / 2, 3, 1, 1));
        layers.push(ConvLayer::new(format!("dec{l}.conv0"), ch, ch / 2, 3, 1, 1));
        layers.push(ConvLayer::new(format!("dec{l}.conv1"), ch / 2, ch / 2, 3, 1, 1));
    }
    layers.push(ConvLayer::new("out", c, spec.image_channels(), 1, 1, 0));
    layers
}

/// Draws weights for a layer table: kernels from the init scheme, zero biases.
pub fn init_params<T: Real>(layers: &[ConvLayer], init: InitScheme, seed: u64) -> Params<T> {
    let mut rng = ChaCha8Rng::seed_from_u64(seed);
    let mut params = Params::new();
    for layer in layers {
        let std = init.std(layer.fan_in());
        let normal = Normal::new(0.0, std).expect("finite init std");
        let shape = [layer.out_channels, layer.in_channels, layer.kernel, layer.kernel];
        let weight = Tensor::from_fn(shape, |_| T::from_f64_lossy(normal.sample(&mut rng)));
        params.insert(format!("{}.weight", layer.name), weight);
        params.insert(format!("{}.bias", layer.name), Tensor::zeros([1, layer.out_channels, 1, 1]));
    }
    params
}

#[derive(Clone, Debug)]
pub struct Generator<T> {
    spec: GeneratorSpec,
    params: Params<T>,
}

impl<T: Real> Generator<T> {
    pub fn build(spec: GeneratorSpec, seed: u64) -> Result<Self> {
        spec.validate()?;
        let params = init_params(&generator_layers(&spec), spec.init, seed);
        Ok(Generator { spec, params })
    }

    /// Wraps existing parameters, checking names and shapes against the spec.
    pub fn from_params(spec: GeneratorSpec, params: Params<T>) -> Result<Self> {
        spec.validate()?;
        check_params(&generator_layers(&spec), &params)?;
        Ok(Generator { spec, params })
    }

    pub fn spec(&self) -> &GeneratorSpec {
        &self.spec
    }

    pub fn params(&self) -> &Params<T> {
        &self.params
    }

    pub fn params_mut(&mut self) -> &mut Params<T> {
        &mut self.params
    }

    pub fn cast<U: Real>(&self) -> Generator<U> {
        Generator {
            spec: self.spec.clone(),
            params: self.params.cast(),
        }
    }

    /// Records the forward pass on `tape`; `bound` must come from
    /// `self.params().bind(..)` on the same tape.
    pub fn forward_on(&self, tape: &mut Tape<T>, bound: &Bound, image: Var, control: Var) -> Result<Var> {
        let is = tape.shape(image);
        let cs = tape.shape(control);
        if is[1] != self.spec.image_channels() {
            return Err(Error::shape(format!(
                "generator expects {} image channels, got {}",
                self.spec.image_channels(),
                is[1]
            )));
        }
        if cs[1] != 1 || cs[0] != is[0] || cs[2] != is[2] || cs[3] != is[3] {
            return Err(Error::shape(format!(
                "control map {cs:?} does not match image {is:?}"
            )));
        }
        let align = 1 << self.spec.depth;
        if is[2] % align != 0 || is[3] % align != 0 {
            return Err(Error::shape(format!(
                "image size {}x{} is not a multiple of {align}",
                is[2], is[3]
            )));
        }

        let mut layer = 0usize;
        let mut next = |tape: &mut Tape<T>, x: Var, cln: bool| {
            let w = bound.var(2 * layer);
            let b = bound.var(2 * layer + 1);
            layer += 1;
            let y = tape.conv2d(x, w, Some(b), 1, 1);
            if cln {
                self.activate_and_norm(tape, y)
            } else {
                y
            }
        };

        let mut h = tape.concat(image, control);
        let mut skips = Vec::with_capacity(self.spec.depth);
        for _ in 0..self.spec.depth {
            h = next(tape, h, true);
            h = next(tape, h, true);
            skips.push(h);
            h = tape.maxpool2(h);
        }
        h = next(tape, h, true);
        h = next(tape, h, true);
        for skip in skips.into_iter().rev() {
            h = tape.upsample2x(h);
            h = next(tape, h, false);
            h = tape.concat(h, skip);
            h = next(tape, h, true);
            h = next(tape, h, true);
        }
        let w = bound.var(2 * layer);
        let b = bound.var(2 * layer + 1);
        let out = tape.conv2d(h, w, Some(b), 1, 0);
        Ok(match self.spec.output_activation {
            OutputActivation::Tanh => tape.tanh(out),
            OutputActivation::LinearClamped => tape.clamp(out, -1.0, 1.0),
        })
    }

    fn activate_and_norm(&self, tape: &mut Tape<T>, y: Var) -> Var {
        let y = match self.spec.pre_norm_nonlinearity {
            Nonlinearity::LeakyRelu(s) => tape.leaky_relu(y, s),
            Nonlinearity::None => y,
        };
        match self.spec.norm_mode {
            NormMode::Identity => y,
            NormMode::Instance => tape.normalize(y, true, NORM_EPS),
            NormMode::Batch => tape.normalize(y, false, NORM_EPS),
        }
    }

    /// Pure forward on raw tensors.
    pub fn forward(&self, image: &Tensor<T>, control: &Tensor<T>) -> Result<Tensor<T>> {
        let mut tape = Tape::new();
        let bound = self.params.bind(&mut tape, false);
        let x = tape.constant(image.clone());
        let c = tape.constant(control.clone());
        let y = self.forward_on(&mut tape, &bound, x, c)?;
        Ok(tape.value(y).clone())
    }
}

impl Generator<f32> {
    /// `ŷ = G(concat(x, c))`.
    pub fn translate(&self, image: &ImageBatch, control: &ControlMap) -> Result<ImageBatch> {
        let out = self.forward(image.tensor(), control.tensor())?;
        ImageBatch::new(out)
    }
}

pub(crate) fn check_params<T: Real>(layers: &[ConvLayer], params: &Params<T>) -> Result<()> {
    if params.len() != 2 * layers.len() {
        return Err(Error::shape(format!(
            "expected {} parameter tensors, found {}",
            2 * layers.len(),
            params.len()
        )));
    }
    for (i, layer) in layers.iter().enumerate() {
        let expect_w = [layer.out_channels, layer.in_channels, layer.kernel, layer.kernel];
        let expect_b = [1, layer.out_channels, 1, 1];
        for (j, (suffix, shape)) in [("weight", expect_w), ("bias", expect_b)].into_iter().enumerate() {
            let name = format!("{}.{suffix}", layer.name);
            if params.names()[2 * i + j] != name {
                return Err(Error::shape(format!(
                    "parameter {} found where {name} was expected",
                    params.names()[2 * i + j]
                )));
            }
            if params.tensors()[2 * i + j].shape() != shape {
                return Err(Error::shape(format!(
                    "parameter {name} has shape {:?}, expected {shape:?}",
                    params.tensors()[2 * i + j].shape()
                )));
            }
        }
    }
    Ok(())
}

#[cfg(test)]
mod tests {
    use super::*;
    use rand::Rng;

    fn tiny_spec() -> GeneratorSpec {
        GeneratorSpec {
            base_channels: 2,
            depth: 2,
            ..GeneratorSpec::desk()
        }
    }

    #[test]
    fn first_layer_consumes_image_plus_control() {
        let layers = generator_layers(&GeneratorSpec::full_scale());
        assert_eq!(layers[0].in_channels, 3 + 1);
        assert_eq!(layers[0].out_channels, 32);
        let mid = layers.iter().find(|l| l.name == "mid.conv1").unwrap();
        assert_eq!((mid.in_channels, mid.out_channels), (512, 512));
        let last_dec = layers.iter().find(|l| l.name == "dec0.conv1").unwrap();
        assert_eq!((last_dec.in_channels, last_dec.out_channels), (32, 32));
        let out = layers.last().unwrap();
        assert_eq!((out.in_channels, out.out_channels, out.kernel), (32, 3, 1));
    }

    #[test]
    fn full_scale_parameter_count() {
        let g = Generator::<f32>::build(GeneratorSpec::full_scale(), 0).unwrap();
        let count = g.params().count() as f64 / 1e6;
        assert!((count - 8.6).abs() < 0.1, "{count}M");
    }

    #[test]
    fn desk_parameter_count_matches_layer_walk() {
        // independent walk over the block structure, not the layer table
        let (c, d, cin) = (8usize, 4usize, 4usize);
        let conv = |i: usize, o: usize, k: usize| k * k * i * o + o;
        let mut expect = 0;
        let mut prev = cin;
        for l in 0..d {
            let o = c << l;
            expect += conv(prev, o, 3) + conv(o, o, 3);
            prev = o;
        }
        expect += conv(prev, c << d, 3) + conv(c << d, c << d, 3);
        for l in (0..d).rev() {
            let ch = c << (l + 1);
            expect += conv(ch, ch / 2, 3) + conv(ch, ch / 2, 3) + conv(ch / 2, ch / 2, 3);
        }
        expect += conv(c, 3, 1);
        let g = Generator::<f32>::build(GeneratorSpec::desk(), 0).unwrap();
        assert_eq!(g.params().count(), expect);
        assert_eq!(expect, 540_307);
    }

    #[test]
    fn build_is_deterministic_per_seed() {
        let a = Generator::<f32>::build(GeneratorSpec::desk(), 7).unwrap();
        let b = Generator::<f32>::build(GeneratorSpec::desk(), 7).unwrap();
        let c = Generator::<f32>::build(GeneratorSpec::desk(), 8).unwrap();
        assert_eq!(a.params(), b.params());
        assert_ne!(a.params(), c.params());
    }

    #[test]
    fn rejects_instance_norm_without_nonlinearity() {
        let spec = GeneratorSpec {
            norm_mode: NormMode::Instance,
            pre_norm_nonlinearity: Nonlinearity::None,
            ..GeneratorSpec::desk()
        };
        assert!(matches!(Generator::<f32>::build(spec.clone(), 0), Err(Error::Config(_))));
        let allowed = GeneratorSpec {
            allow_degenerate: true,
            ..spec
        };
        assert!(Generator::<f32>::build(allowed, 0).is_ok());
    }

    #[test]
    fn forward_preserves_shape_and_range() {
        let g = Generator::<f32>::build(GeneratorSpec::desk(), 1).unwrap();
        let mut rng = ChaCha8Rng::seed_from_u64(4);
        let x = ImageBatch::new(Tensor::from_fn([2, 3, 64, 64], |_| rng.random_range(-1.0..1.0))).unwrap();
        let c = ControlMap::constant(2, 64, 64, 0.3).unwrap();
        let y = g.translate(&x, &c).unwrap();
        assert_eq!(y.shape(), [2, 3, 64, 64]);
        assert!(y.tensor().data().iter().all(|v| (-1.0..=1.0).contains(v)));
        let y2 = g.translate(&x, &c).unwrap();
        assert_eq!(y, y2);
    }

    #[test]
    fn forward_rejects_mismatched_control() {
        let g = Generator::<f32>::build(GeneratorSpec::desk(), 1).unwrap();
        let x = ImageBatch::new(Tensor::zeros([1, 3, 32, 32])).unwrap();
        let c = ControlMap::constant(1, 16, 32, 0.3).unwrap();
        assert!(matches!(g.translate(&x, &c), Err(Error::Shape(_))));
    }

    #[test]
    fn distinct_constant_controls_change_the_output() {
        for norm in [NormMode::Identity, NormMode::Instance] {
            let spec = GeneratorSpec {
                norm_mode: norm,
                init: InitScheme::HeNormal { slope: 0.2 },
                ..GeneratorSpec::desk()
            };
            let g = Generator::<f32>::build(spec, 3).unwrap();
            let mut rng = ChaCha8Rng::seed_from_u64(5);
            let x = ImageBatch::new(Tensor::from_fn([1, 3, 32, 32], |_| rng.random_range(-1.0..1.0))).unwrap();
            let a = g.translate(&x, &ControlMap::constant(1, 32, 32, 0.2).unwrap()).unwrap();
            let b = g.translate(&x, &ControlMap::constant(1, 32, 32, 0.8).unwrap()).unwrap();
            assert!(a.tensor().max_abs_diff(b.tensor()) > 0.0, "{norm:?}");
        }
    }

    #[test]
    fn parameter_gradients_match_finite_differences() {
        for norm in [NormMode::Identity, NormMode::Instance] {
            let spec = GeneratorSpec {
                norm_mode: norm,
                init: InitScheme::HeNormal { slope: 0.2 },
                ..tiny_spec()
            };
            let g = Generator::<f64>::build(spec, 11).unwrap();
            let mut rng = ChaCha8Rng::seed_from_u64(12);
            let x = Tensor::from_fn([2, 3, 8, 8], |_| rng.random_range(-1.0..1.0));
            let c = Tensor::from_fn([2, 1, 8, 8], |[n, ..]| 0.25 + 0.5 * n as f64);
            let head = Tensor::from_fn([2, 3, 8, 8], |_| rng.random_range(-1.0..1.0));

            let scalar = |g: &Generator<f64>| {
                let y = g.forward(&x, &c).unwrap();
                y.data().iter().zip(head.data()).map(|(a, b)| a * b).sum::<f64>()
            };

            let mut tape = Tape::new();
            let bound = g.params().bind(&mut tape, true);
            let xv = tape.constant(x.clone());
            let cv = tape.constant(c.clone());
            let y = g.forward_on(&mut tape, &bound, xv, cv).unwrap();
            let hv = tape.constant(head.clone());
            let prod = tape.mul(y, hv);
            let loss = tape.sum(prod);
            let grads = tape.backward(loss);

            let step = 1e-6;
            for (pi, name) in g.params().names().iter().enumerate() {
                let analytic = grads.get(bound.var(pi)).unwrap();
                let n = analytic.len();
                for j in [0, n / 2, n - 1] {
                    let mut plus = g.clone();
                    plus.params_mut().tensors_mut()[pi].data_mut()[j] += step;
                    let mut minus = g.clone();
                    minus.params_mut().tensors_mut()[pi].data_mut()[j] -= step;
                    let numeric = (scalar(&plus) - scalar(&minus)) / (2.0 * step);
                    let a = analytic.data()[j];
                    let rel = (a - numeric).abs() / (a.abs().max(numeric.abs()).max(1e-8));
                    assert!(rel < 1e-3 || (a - numeric).abs() < 1e-9, "{norm:?} {name}[{j}]: {a} vs {numeric}");
                }
            }
        }
    }
}
