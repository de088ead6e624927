//! The GLMix spatial-mixing block.
//!
//! Input features are processed at two granularities in parallel:
//!
//! - **local**: a pointwise → depthwise k×k → pointwise convolution stack on
//!   the `[B, C, H, W]` grid;
//! - **global**: soft clustering pools the grid into `M` semantic slots,
//!   self-attention mixes the slots, and soft dispatching scatters them back.
//!
//! Clustering and dispatching share one set of correspondence logits
//! `A = cos(S_init, X̄) / σ` (shape `[B, M, H·W]`): clustering normalizes `A`
//! over pixels, dispatching over slots. The two branches are summed.

mod block;
mod cluster;
mod cost;

use std::fmt;
use std::str::FromStr;

use serde::{Deserialize, Serialize};

pub use block::{GlMix, GlMixConfig, LocalBranch};
pub use cluster::{cluster, dispatch, ClusterState, COSINE_EPS, SIGMA_FLOOR, SIGMA_INIT};
pub use cost::{full_attention_cost, glmix_cost, pool_reads, slot_grid_side, GlMixCost, Macs};

use crate::error::Error;

/// How the two branches are composed (the ablation set).
#[derive(Debug, Clone, Copy, PartialEq, Eq, Serialize, Deserialize, Default)]
#[serde(rename_all = "snake_case")]
pub enum Layout {
    #[default]
    Parallel,
    SequentialGlobalFirst,
    SequentialLocalFirst,
    LocalOnly,
    GlobalOnly,
}

impl Layout {
    pub const ALL: [Layout; 5] = [
        Layout::Parallel,
        Layout::SequentialGlobalFirst,
        Layout::SequentialLocalFirst,
        Layout::LocalOnly,
        Layout::GlobalOnly,
    ];

    pub fn has_local(self) -> bool {
        self != Layout::GlobalOnly
    }

    pub fn has_global(self) -> bool {
        self != Layout::LocalOnly
    }

    pub fn as_str(self) -> &'static str {
        match self {
            Layout::Parallel => "parallel",
            Layout::SequentialGlobalFirst => "sequential_global_first",
            Layout::SequentialLocalFirst => "sequential_local_first",
            Layout::LocalOnly => "local_only",
            Layout::GlobalOnly => "global_only",
        }
    }
}

impl fmt::Display for Layout {
    fn fmt(&self, f: &mut fmt::Formatter<'_>) -> fmt::Result {
        f.write_str(self.as_str())
    }
}

impl FromStr for Layout {
    type Err = Error;

    fn from_str(s: &str) -> Result<Self, Error> {
        Layout::ALL
            .into_iter()
            .find(|l| l.as_str() == s)
            .ok_or_else(|| Error::config(format!("unknown GLMix layout `{s}`")))
    }
}

/// What the local branch runs.
#[derive(Debug, Clone, Copy, PartialEq, Eq, Serialize, Deserialize, Default)]
#[serde(rename_all = "snake_case", tag = "kind")]
pub enum LocalKind {
    #[default]
    DwConv,
    /// Plain window self-attention in place of the whole convolution stack.
    WindowMhsa { window: usize },
}

/// Where the initial slots come from.
#[derive(Debug, Clone, Copy, PartialEq, Eq, Serialize, Deserialize, Default)]
#[serde(rename_all = "snake_case")]
pub enum SlotInit {
    /// Per-image adaptive average pooling onto a √M×√M grid.
    #[default]
    Pooling,
    /// A learned `[M, C]` table shared by all images.
    Learned,
}
