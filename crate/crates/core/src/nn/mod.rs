//! Parameterized layers built from tensor primitives.
//!
//! Layers do not own their weights. They hold [`ParamId`]s into a flat,
//! name-addressed [`ParamStore`], which is what optimizers update and
//! checkpoints serialize.

mod attention;
mod embed;
mod ffn;
mod layers;
mod params;

pub use attention::{grid_attention, Mhsa, WindowMhsa};
pub use embed::{ConvPosEnc, Downsample, PatchEmbed};
pub use ffn::Ffn;
pub use layers::{Conv2d, LayerNorm, Linear};
pub use params::{Init, ParamId, ParamStore};

/// Heads for a stage of width `channels` at `head_dim` channels per head.
pub fn heads_for(channels: usize, head_dim: usize) -> usize {
    (channels / head_dim.max(1)).max(1)
}
