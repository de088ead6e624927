//! GLMix spatial mixing and the GLNet backbone family.
//!
//! A GLMix block looks at its input twice: as a fine feature grid that a
//! depthwise convolution mixes locally, and as a small set of semantic slots
//! obtained by soft clustering, which multi-head self-attention mixes
//! globally before soft dispatching sends them back to the grid. Both
//! results are summed.
//!
//! Module map:
//! - [`tensor`]: dense tensors with reverse-mode autodiff and MAC instrumentation
//! - [`nn`]: attention, feed-forward, embedding and downsampling layers
//! - [`glmix`]: clustering, dispatching and the GLMix block
//! - [`glnet`]: model specs, presets, ablations, the backbone and checkpoints
//! - [`analyzer`]: closed-form cost audit and scaling benchmarks
//! - [`inspect`]: assignment maps, k-medoids slot selection, PPM rendering
//! - [`harness`]: synthetic data, optimizer, training and evaluation loops

pub mod analyzer;
pub mod error;
pub mod glmix;
pub mod glnet;
pub mod gradcheck;
pub mod harness;
pub mod inspect;
pub mod nn;
pub mod tensor;

pub use error::{Error, Result};
pub use tensor::{Element, Tensor};
