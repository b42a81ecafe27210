//! PatchGAN-style discriminator: three stride-2 4x4 convs, one stride-1,
//! then a 1-channel 4x4 conv producing a spatial confidence map. No
//! normalization layers.

use super::batch::{ConfidenceMap, ImageBatch};
use super::generator::{check_params, init_params};
use super::params::{Bound, Params};
use super::spec::{ConvLayer, DiscriminatorSpec};
use crate::autograd::{Real, Tape, Tensor, Var};
use crate::error::{Error, Result};

pub fn discriminator_layers(spec: &DiscriminatorSpec) -> Vec<ConvLayer> {
    let b = spec.base_channels;
    vec![
        ConvLayer::new("conv0", spec.in_channels, b, 4, 2, 1),
        ConvLayer::new("conv1", b, 2 * b, 4, 2, 1),
        ConvLayer::new("conv2", 2 * b, 4 * b, 4, 2, 1),
        ConvLayer::new("conv3", 4 * b, 8 * b, 4, 1, 1),
        ConvLayer::new("head", 8 * b, 1, 4, 1, 1),
    ]
}

/// Spatial size of the confidence map for an `h x w` input, or `None` when
/// the input is too small for the stride plan.
pub fn confidence_size(spec: &DiscriminatorSpec, h: usize, w: usize) -> Option<(usize, usize)> {
    let mut size = (h, w);
    for l in discriminator_layers(spec) {
        let f = |s: usize| (s + 2 * l.pad).checked_sub(l.kernel).map(|r| r / l.stride + 1);
        size = (f(size.0)?, f(size.1)?);
        if size.0 == 0 || size.1 == 0 {
            return None;
        }
    }
    Some(size)
}

#[derive(Clone, Debug)]
pub struct Discriminator<T> {
    spec: DiscriminatorSpec,
    params: Params<T>,
}

impl<T: Real> Discriminator<T> {
    pub fn build(spec: DiscriminatorSpec, seed: u64) -> Result<Self> {
        spec.validate()?;
        let params = init_params(&discriminator_layers(&spec), spec.init, seed);
        Ok(Discriminator { spec, params })
    }

    pub fn from_params(spec: DiscriminatorSpec, params: Params<T>) -> Result<Self> {
        spec.validate()?;
        check_params(&discriminator_layers(&spec), &params)?;
        Ok(Discriminator { spec, params })
    }

    pub fn spec(&self) -> &DiscriminatorSpec {
        &self.spec
    }

    pub fn params(&self) -> &Params<T> {
        &self.params
    }

    pub fn params_mut(&mut self) -> &mut Params<T> {
        &mut self.params
    }

    pub fn cast<U: Real>(&self) -> Discriminator<U> {
        Discriminator {
            spec: self.spec.clone(),
            params: self.params.cast(),
        }
    }

    pub fn forward_on(&self, tape: &mut Tape<T>, bound: &Bound, image: Var) -> Result<Var> {
        let [_, c, h, w] = tape.shape(image);
        if c != self.spec.in_channels {
            return Err(Error::shape(format!(
                "discriminator expects {} channels, got {c}",
                self.spec.in_channels
            )));
        }
        if confidence_size(&self.spec, h, w).is_none() {
            return Err(Error::shape(format!("image {h}x{w} too small for the discriminator")));
        }
        let layers = discriminator_layers(&self.spec);
        let last = layers.len() - 1;
        let mut x = image;
        for (i, l) in layers.iter().enumerate() {
            x = tape.conv2d(x, bound.var(2 * i), Some(bound.var(2 * i + 1)), l.stride, l.pad);
            if i != last {
                x = tape.leaky_relu(x, self.spec.slope);
            }
        }
        Ok(x)
    }

    pub fn forward(&self, image: &Tensor<T>) -> Result<Tensor<T>> {
        let mut tape = Tape::new();
        let bound = self.params.bind(&mut tape, false);
        let x = tape.constant(image.clone());
        let y = self.forward_on(&mut tape, &bound, x)?;
        Ok(tape.value(y).clone())
    }
}

impl Discriminator<f32> {
    pub fn score(&self, image: &ImageBatch) -> Result<ConfidenceMap> {
        self.forward(image.tensor()).map(ConfidenceMap)
    }
}

#[cfg(test)]
mod tests {
    use super::*;

    #[test]
    fn confidence_map_size_follows_stride_plan() {
        // 64 -> 32 -> 16 -> 8 (stride-2, k4, p1), -> 7 -> 6 (stride-1, k4, p1)
        let spec = DiscriminatorSpec::desk();
        assert_eq!(confidence_size(&spec, 64, 64), Some((6, 6)));
        assert_eq!(confidence_size(&spec, 128, 64), Some((14, 6)));
        let d = Discriminator::<f32>::build(spec, 0).unwrap();
        let x = ImageBatch::new(Tensor::zeros([1, 3, 64, 64])).unwrap();
        assert_eq!(d.score(&x).unwrap().shape(), [1, 1, 6, 6]);
    }

    #[test]
    fn zero_head_gives_zero_map() {
        let mut d = Discriminator::<f32>::build(DiscriminatorSpec::desk(), 0).unwrap();
        for v in d.params_mut().get_mut("head.weight").unwrap().data_mut() {
            *v = 0.0;
        }
        let x = ImageBatch::new(Tensor::zeros([1, 3, 64, 64])).unwrap();
        let m = d.score(&x).unwrap();
        assert!(m.tensor().data().iter().all(|&v| v == 0.0));
    }

    #[test]
    fn score_is_pure() {
        let d = Discriminator::<f32>::build(DiscriminatorSpec::desk(), 2).unwrap();
        let x = ImageBatch::new(Tensor::from_fn([1, 3, 32, 32], |[_, c, h, w]| ((c + h * w) % 7) as f32 / 7.0)).unwrap();
        assert_eq!(d.score(&x).unwrap(), d.score(&x).unwrap());
    }

    #[test]
    fn channel_mismatch_is_a_shape_error() {
        let d = Discriminator::<f32>::build(DiscriminatorSpec::desk(), 2).unwrap();
        let x = Tensor::zeros([1, 1, 32, 32]);
        assert!(matches!(d.forward(&x), Err(Error::Shape(_))));
    }

    #[test]
    fn full_scale_parameter_count() {
        let d = Discriminator::<f32>::build(DiscriminatorSpec::full_scale(), 0).unwrap();
        assert_eq!(d.params().count(), 2_764_737);
    }
}
