//! Generator and discriminator architectures with control-channel injection.

mod batch;
mod discriminator;
mod generator;
mod params;
mod probe;
mod spec;

pub use batch::{ConfidenceMap, ControlBounds, ControlMap, ImageBatch};
pub use discriminator::{confidence_size, discriminator_layers, Discriminator};
pub use generator::{generator_layers, init_params, Generator};
pub use params::{Bound, Params};
pub use probe::{in_degeneracy_probe, ProbeReport, DEGENERACY_TOL};
pub use spec::{
    ConvLayer, DiscriminatorSpec, GeneratorSpec, InitScheme, NormMode, Nonlinearity, OutputActivation,
};
