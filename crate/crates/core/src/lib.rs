//! MonoPix: unpaired image-to-image translation whose strength follows a
//! per-pixel control map monotonically.
//!
//! A conditional U-Net generator receives the image together with a control
//! channel `c` in `[0, 1]`. Training contrasts two intensities of the same
//! input and asks the target-domain discriminator to grow more confident as
//! `c` grows. At test time an intensity is picked by grid search, ternary
//! search, or a small learned expert.

pub mod autograd;
pub mod cli;
pub mod data;
pub mod error;
pub mod experiments;
pub mod inference;
pub mod losses;
pub mod metrics;
pub mod model;
pub mod service;
pub mod training;

pub use error::{Error, Result};
