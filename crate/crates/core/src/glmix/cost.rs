use std::ops::{Add, AddAssign};

use super::{GlMixConfig, LocalKind, SlotInit};
use crate::error::{Error, Result};
use crate::tensor::adaptive_window;
use crate::tensor::counter::{NORM_OPS_PER_ELEMENT as NORM, SOFTMAX_OPS_PER_ELEMENT as SOFTMAX};

/// √M, or a config error when `M` is not a positive perfect square.
pub fn slot_grid_side(num_slots: usize) -> Result<usize> {
    let side = (num_slots as f64).sqrt().round() as usize;
    if num_slots == 0 || side * side != num_slots {
        return Err(Error::config(format!(
            "slot count {num_slots} is not a perfect square"
        )));
    }
    Ok(side)
}

/// Input elements read per channel by adaptive average pooling of an
/// `h × w` grid onto `out_h × out_w`.
pub fn pool_reads(h: usize, w: usize, out_h: usize, out_w: usize) -> u64 {
    let span = |n: usize, out: usize| -> u64 {
        (0..out)
            .map(|i| {
                let (a, b) = adaptive_window(i, n, out);
                (b - a) as u64
            })
            .sum()
    };
    span(h, out_h) * span(w, out_w)
}

/// Operation count split into multiply-accumulates of matrix products and
/// convolutions, and the elementwise terms (norms, softmax, activations,
/// pooling).
#[derive(Debug, Clone, Copy, PartialEq, Eq, Default)]
pub struct Macs {
    pub linear: u64,
    pub elementwise: u64,
}

impl Macs {
    pub fn new(linear: u64, elementwise: u64) -> Self {
        Macs {
            linear,
            elementwise,
        }
    }

    pub fn total(&self) -> u64 {
        self.linear + self.elementwise
    }

    pub fn scaled(self, k: u64) -> Self {
        Macs::new(self.linear * k, self.elementwise * k)
    }
}

impl Add for Macs {
    type Output = Macs;

    fn add(self, o: Macs) -> Macs {
        Macs::new(self.linear + o.linear, self.elementwise + o.elementwise)
    }
}

impl AddAssign for Macs {
    fn add_assign(&mut self, o: Macs) {
        *self = *self + o;
    }
}

/// Closed-form parameters and operation counts of one GLMix block on an
/// `h × w` grid, batch 1.
#[derive(Debug, Clone, Copy, PartialEq, Eq, Default)]
pub struct GlMixCost {
    pub local_params: u64,
    /// σ and learned slots.
    pub cluster_params: u64,
    pub slot_attn_params: u64,
    pub local: Macs,
    pub cluster: Macs,
    pub slot_attn: Macs,
    pub dispatch: Macs,
}

impl GlMixCost {
    pub fn params(&self) -> u64 {
        self.local_params + self.cluster_params + self.slot_attn_params
    }

    pub fn macs(&self) -> u64 {
        (self.local + self.cluster + self.slot_attn + self.dispatch).total()
    }
}

/// Self-attention over `tokens` tokens of width `c`, including projections.
pub fn full_attention_cost(tokens: usize, c: usize, heads: usize) -> (u64, Macs) {
    let (n, c, h) = (tokens as u64, c as u64, heads as u64);
    let params = 4 * c * c + 4 * c;
    (
        params,
        Macs::new(4 * n * c * c + 2 * n * n * c, SOFTMAX * h * n * n),
    )
}

pub fn glmix_cost(cfg: &GlMixConfig, h: usize, w: usize) -> Result<GlMixCost> {
    let side = slot_grid_side(cfg.num_slots)?;
    let (n, c, m) = ((h * w) as u64, cfg.channels as u64, cfg.num_slots as u64);
    let mut cost = GlMixCost::default();
    if cfg.layout.has_local() {
        match cfg.local {
            LocalKind::DwConv => {
                let k2 = (cfg.kernel * cfg.kernel) as u64;
                cost.local_params = 2 * (c * c + c) + c * k2 + c;
                cost.local = Macs::new(2 * n * c * c + n * c * k2, 0);
            }
            LocalKind::WindowMhsa { window } => {
                if window == 0 || !h.is_multiple_of(window) || !w.is_multiple_of(window) {
                    return Err(Error::config(format!(
                        "grid {h}x{w} not divisible by window {window}"
                    )));
                }
                let tiles = ((h / window) * (w / window)) as u64;
                let (p, per_tile) = full_attention_cost(window * window, cfg.channels, cfg.heads);
                cost.local_params = p;
                cost.local = per_tile.scaled(tiles);
            }
        }
    }
    if cfg.layout.has_global() {
        let (mhsa_params, mhsa) = full_attention_cost(cfg.num_slots, cfg.channels, cfg.heads);
        cost.slot_attn_params = mhsa_params;
        cost.slot_attn = mhsa;
        cost.cluster_params = 1;
        let pool = match cfg.slot_init {
            SlotInit::Pooling => c * pool_reads(h, w, side, side),
            SlotInit::Learned => {
                cost.cluster_params += m * c;
                0
            }
        };
        // cosine logits and weighted slot means; pooling, both L2
        // normalizations and the two softmaxes over the shared logits
        cost.cluster = Macs::new(
            2 * m * c * n,
            pool + NORM * (m * c + n * c) + 2 * SOFTMAX * m * n,
        );
        cost.dispatch = Macs::new(c * m * n, 0);
    }
    Ok(cost)
}
