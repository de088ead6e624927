//! Four-stage hierarchical backbones built from GLMix blocks.
//!
//! Stages run at 1/4, 1/8, 1/16 and 1/32 of the input resolution with
//! channels `C, 2C, 4C, 8C`. The first three stages use GLMix mixers (stage 3
//! optionally alternates with full attention), the last stage uses full
//! attention. A final LayerNorm, global average pooling and a linear layer
//! form the classifier.

pub mod checkpoint;
mod model;
mod spec;

pub use model::{Block, BlockState, ForwardOptions, ForwardOutput, GlNet, GlNetModel, Mixer};
pub use spec::{MixerKind, ModelSpec, ABLATIONS, PRESETS};
