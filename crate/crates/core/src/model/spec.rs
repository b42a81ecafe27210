use serde::{Deserialize, Serialize};

use crate::error::{Error, Result};

#[derive(Clone, Copy, Debug, PartialEq, Eq, Serialize, Deserialize)]
#[serde(rename_all = "snake_case")]
pub enum NormMode {
    Identity,
    Instance,
    Batch,
}

#[derive(Clone, Copy, Debug, PartialEq, Serialize, Deserialize)]
#[serde(rename_all = "snake_case")]
pub enum Nonlinearity {
    LeakyRelu(f64),
    None,
}

impl Default for Nonlinearity {
    fn default() -> Self {
        Nonlinearity::LeakyRelu(0.2)
    }
}

#[derive(Clone, Copy, Debug, PartialEq, Eq, Serialize, Deserialize)]
#[serde(rename_all = "snake_case")]
pub enum OutputActivation {
    Tanh,
    LinearClamped,
}

/// Weight initialisation for convolution kernels; biases always start at 0.
#[derive(Clone, Copy, Debug, PartialEq, Serialize, Deserialize)]
#[serde(rename_all = "snake_case", tag = "kind")]
pub enum InitScheme {
    Normal { std: f64 },
    /// `N(0, gain / fan_in)` with `gain = 2 / (1 + slope^2)`.
    HeNormal { slope: f64 },
}

impl Default for InitScheme {
    fn default() -> Self {
        InitScheme::Normal { std: 0.02 }
    }
}

impl InitScheme {
    pub(crate) fn std(&self, fan_in: usize) -> f64 {
        match *self {
            InitScheme::Normal { std } => std,
            InitScheme::HeNormal { slope } => (2.0 / ((1.0 + slope * slope) * fan_in as f64)).sqrt(),
        }
    }
}

#[derive(Clone, Debug, PartialEq, Serialize, Deserialize)]
pub struct GeneratorSpec {
    /// Image channels plus the one control channel.
    pub in_channels: usize,
    pub base_channels: usize,
    pub depth: usize,
    pub norm_mode: NormMode,
    pub pre_norm_nonlinearity: Nonlinearity,
    pub output_activation: OutputActivation,
    pub bidirectional: bool,
    #[serde(default)]
    pub init: InitScheme,
    /// Permits instance norm without a preceding nonlinearity, which makes
    /// the network blind to constant control maps.
    #[serde(default)]
    pub allow_degenerate: bool,
}

impl GeneratorSpec {
    /// Desk-scale default: 8 base channels, RGB, identity norms.
    pub fn desk() -> Self {
        GeneratorSpec {
            in_channels: 4,
            base_channels: 8,
            depth: 4,
            norm_mode: NormMode::Identity,
            pre_norm_nonlinearity: Nonlinearity::LeakyRelu(0.2),
            output_activation: OutputActivation::Tanh,
            bidirectional: true,
            init: InitScheme::default(),
            allow_degenerate: false,
        }
    }

    /// Full-width network with 32 base channels.
    pub fn full_scale() -> Self {
        GeneratorSpec {
            base_channels: 32,
            ..Self::desk()
        }
    }

    pub fn image_channels(&self) -> usize {
        self.in_channels - 1
    }

    pub fn validate(&self) -> Result<()> {
        if self.in_channels < 2 {
            return Err(Error::config("generator needs at least one image channel plus the control channel"));
        }
        if self.base_channels < 1 {
            return Err(Error::config("base_channels must be >= 1"));
        }
        if self.depth < 1 {
            return Err(Error::config("depth must be >= 1"));
        }
        if let Nonlinearity::LeakyRelu(s) = self.pre_norm_nonlinearity {
            if !(0.0..1.0).contains(&s) {
                return Err(Error::config(format!("leaky ReLU slope {s} outside [0, 1)")));
            }
        }
        if self.norm_mode == NormMode::Instance
            && self.pre_norm_nonlinearity == Nonlinearity::None
            && !self.allow_degenerate
        {
            return Err(Error::config(
                "instance norm directly after a linear conv erases constant control maps; \
                 add a nonlinearity or set allow_degenerate",
            ));
        }
        Ok(())
    }
}

#[derive(Clone, Debug, PartialEq, Serialize, Deserialize)]
pub struct DiscriminatorSpec {
    pub in_channels: usize,
    pub base_channels: usize,
    #[serde(default = "default_slope")]
    pub slope: f64,
    #[serde(default)]
    pub init: InitScheme,
}

fn default_slope() -> f64 {
    0.2
}

impl DiscriminatorSpec {
    pub fn desk() -> Self {
        DiscriminatorSpec {
            in_channels: 3,
            base_channels: 16,
            slope: 0.2,
            init: InitScheme::default(),
        }
    }

    pub fn full_scale() -> Self {
        DiscriminatorSpec {
            base_channels: 64,
            ..Self::desk()
        }
    }

    pub fn validate(&self) -> Result<()> {
        if self.in_channels < 1 || self.base_channels < 1 {
            return Err(Error::config("discriminator channels must be >= 1"));
        }
        Ok(())
    }
}

/// One convolution in a network's layer table.
#[derive(Clone, Debug, PartialEq, Eq)]
pub struct ConvLayer {
    pub name: String,
    pub in_channels: usize,
    pub out_channels: usize,
    pub kernel: usize,
    pub stride: usize,
    pub pad: usize,
}

impl ConvLayer {
    pub(crate) fn new(name: impl Into<String>, cin: usize, cout: usize, kernel: usize, stride: usize, pad: usize) -> Self {
        ConvLayer {
            name: name.into(),
            in_channels: cin,
            out_channels: cout,
            kernel,
            stride,
            pad,
        }
    }

    pub fn fan_in(&self) -> usize {
        self.in_channels * self.kernel * self.kernel
    }
}
