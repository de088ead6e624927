use serde::{Deserialize, Serialize};

use super::cluster::{cluster, dispatch, ClusterState, SIGMA_INIT};
use super::cost::slot_grid_side;
use super::{Layout, LocalKind, SlotInit};
use crate::error::{Error, Result};
use crate::nn::{Conv2d, Init, Linear, Mhsa, ParamId, ParamStore, WindowMhsa};
use crate::tensor::{counter, Element, Tensor};

#[derive(Debug, Clone, Copy, PartialEq, Eq, Serialize, Deserialize)]
pub struct GlMixConfig {
    pub channels: usize,
    pub num_slots: usize,
    /// Depthwise kernel of the local branch (odd).
    pub kernel: usize,
    /// Heads of the slot self-attention (and of a window-attention local branch).
    pub heads: usize,
    pub layout: Layout,
    pub local: LocalKind,
    pub slot_init: SlotInit,
}

impl GlMixConfig {
    pub fn new(channels: usize, num_slots: usize, heads: usize) -> Self {
        GlMixConfig {
            channels,
            num_slots,
            kernel: 5,
            heads,
            layout: Layout::Parallel,
            local: LocalKind::DwConv,
            slot_init: SlotInit::Pooling,
        }
    }

    pub fn validate(&self) -> Result<()> {
        slot_grid_side(self.num_slots)?;
        if self.channels == 0 {
            return Err(Error::config("GLMix needs at least one channel"));
        }
        if matches!(self.local, LocalKind::DwConv) && self.kernel.is_multiple_of(2) {
            return Err(Error::config(format!(
                "local kernel must be odd, got {}",
                self.kernel
            )));
        }
        if self.heads == 0 || !self.channels.is_multiple_of(self.heads) {
            return Err(Error::config(format!(
                "{} channels not divisible by {} heads",
                self.channels, self.heads
            )));
        }
        Ok(())
    }
}

#[derive(Debug, Clone)]
pub enum LocalBranch {
    Conv {
        pw_in: Linear,
        dw: Conv2d,
        pw_out: Linear,
    },
    Window(WindowMhsa),
}

impl LocalBranch {
    pub fn forward<T: Element>(&self, ps: &ParamStore<T>, x: &Tensor<T>) -> Result<Tensor<T>> {
        match self {
            LocalBranch::Conv { pw_in, dw, pw_out } => {
                let h = pw_in.forward_grid(ps, x)?;
                pw_out.forward_grid(ps, &dw.forward(ps, &h)?)
            }
            LocalBranch::Window(attn) => attn.forward(ps, x),
        }
    }

    pub fn num_params(&self) -> usize {
        match self {
            LocalBranch::Conv { pw_in, dw, pw_out } => {
                pw_in.num_params() + dw.num_params() + pw_out.num_params()
            }
            LocalBranch::Window(attn) => attn.num_params(),
        }
    }
}

/// One GLMix mixer. Maps `[B, C, H, W]` to `[B, C, H, W]`.
#[derive(Debug, Clone)]
pub struct GlMix {
    pub config: GlMixConfig,
    /// Parameter prefix, also the instrumentation scope prefix.
    pub name: String,
    pub local: Option<LocalBranch>,
    pub slot_mixer: Option<Mhsa>,
    pub sigma: Option<ParamId>,
    pub learned_slots: Option<ParamId>,
}

impl GlMix {
    pub fn new<T: Element>(
        init: &mut Init<'_, T>,
        name: &str,
        config: GlMixConfig,
    ) -> Result<Self> {
        config.validate()?;
        let mut s = init.sub(name);
        let prefix = s.prefix().to_string();
        let c = config.channels;
        let local = if config.layout.has_local() {
            Some(match config.local {
                LocalKind::DwConv => LocalBranch::Conv {
                    pw_in: Linear::new(&mut s, "local.pw1", c, c)?,
                    dw: Conv2d::depthwise(&mut s, "local.dw", c, config.kernel)?,
                    pw_out: Linear::new(&mut s, "local.pw2", c, c)?,
                },
                LocalKind::WindowMhsa { window } => LocalBranch::Window(WindowMhsa::new(
                    &mut s,
                    "local.attn",
                    c,
                    config.heads,
                    window,
                )?),
            })
        } else {
            None
        };
        let (slot_mixer, sigma, learned_slots) = if config.layout.has_global() {
            let mixer = Mhsa::new(&mut s, "slot_attn", c, config.heads)?;
            let sigma = s.constant("cluster.sigma", &[1], SIGMA_INIT)?;
            let slots = match config.slot_init {
                SlotInit::Learned => {
                    Some(s.trunc_normal("cluster.slots", &[config.num_slots, c], 0.02)?)
                }
                SlotInit::Pooling => None,
            };
            (Some(mixer), Some(sigma), slots)
        } else {
            (None, None, None)
        };
        Ok(GlMix {
            config,
            name: prefix,
            local,
            slot_mixer,
            sigma,
            learned_slots,
        })
    }

    pub fn num_params(&self) -> usize {
        self.local.as_ref().map_or(0, LocalBranch::num_params)
            + self.slot_mixer.as_ref().map_or(0, Mhsa::num_params)
            + usize::from(self.sigma.is_some())
            + self
                .learned_slots
                .map_or(0, |_| self.config.num_slots * self.config.channels)
    }

    fn scope(&self, part: &str) -> counter::ScopeGuard {
        counter::scope(|| format!("{}.{part}", self.name))
    }

    fn run_local<T: Element>(&self, ps: &ParamStore<T>, x: &Tensor<T>) -> Result<Tensor<T>> {
        let _g = self.scope("local");
        self.local
            .as_ref()
            .expect("layout has a local branch")
            .forward(ps, x)
    }

    fn run_global<T: Element>(
        &self,
        ps: &ParamStore<T>,
        x: &Tensor<T>,
    ) -> Result<(Tensor<T>, ClusterState<T>)> {
        let sigma = ps.get(self.sigma.expect("layout has a global branch"));
        let learned = self.learned_slots.map(|id| ps.get(id));
        let (slots, state) = {
            let _g = self.scope("cluster");
            cluster(x, sigma, self.config.num_slots, learned)?
        };
        let mixed = {
            let _g = self.scope("slot_attn");
            self.slot_mixer
                .as_ref()
                .expect("layout has a global branch")
                .forward(ps, &slots)?
        };
        let _g = self.scope("dispatch");
        Ok((dispatch(&mixed, &state)?, state))
    }

    /// Returns the mixed grid and, when the layout has a global branch, the
    /// clustering state it used.
    pub fn forward<T: Element>(
        &self,
        ps: &ParamStore<T>,
        x: &Tensor<T>,
    ) -> Result<(Tensor<T>, Option<ClusterState<T>>)> {
        let s = x.shape();
        if s.len() != 4 || s[1] != self.config.channels {
            return Err(Error::shape("glmix", s, &[self.config.channels]));
        }
        Ok(match self.config.layout {
            Layout::Parallel => {
                let l = self.run_local(ps, x)?;
                let (g, state) = self.run_global(ps, x)?;
                let _g = self.scope("fuse");
                (l.add(&g)?, Some(state))
            }
            Layout::SequentialGlobalFirst => {
                let (g, state) = self.run_global(ps, x)?;
                (self.run_local(ps, &g)?, Some(state))
            }
            Layout::SequentialLocalFirst => {
                let l = self.run_local(ps, x)?;
                let (g, state) = self.run_global(ps, &l)?;
                (g, Some(state))
            }
            Layout::LocalOnly => (self.run_local(ps, x)?, None),
            Layout::GlobalOnly => {
                let (g, state) = self.run_global(ps, x)?;
                (g, Some(state))
            }
        })
    }
}

#[cfg(test)]
mod tests {
    use super::*;
    use crate::glmix::glmix_cost;
    use crate::gradcheck::uniform;
    use rand::SeedableRng;
    use rand_chacha::ChaCha8Rng;

    fn build(config: GlMixConfig) -> (ParamStore<f64>, GlMix) {
        let mut ps = ParamStore::new();
        let mut rng = ChaCha8Rng::seed_from_u64(0);
        let block = GlMix::new(&mut Init::new(&mut ps, &mut rng), "mixer", config).unwrap();
        (ps, block)
    }

    #[test]
    fn even_kernel_is_a_config_error() {
        let mut cfg = GlMixConfig::new(8, 4, 2);
        cfg.kernel = 4;
        let mut ps = ParamStore::<f64>::new();
        let mut rng = ChaCha8Rng::seed_from_u64(0);
        assert!(matches!(
            GlMix::new(&mut Init::new(&mut ps, &mut rng), "m", cfg),
            Err(Error::Config(_))
        ));
    }

    #[test]
    fn layouts_preserve_shape_and_report_state() {
        let mut rng = ChaCha8Rng::seed_from_u64(1);
        let x = uniform(&[2, 8, 6, 6], &mut rng);
        for layout in Layout::ALL {
            let mut cfg = GlMixConfig::new(8, 4, 2);
            cfg.layout = layout;
            let (ps, block) = build(cfg);
            let (y, state) = block.forward(&ps, &x).unwrap();
            assert_eq!(y.shape(), x.shape());
            assert_eq!(state.is_some(), layout.has_global());
            assert_eq!(block.num_params(), ps.num_scalars());
            assert_eq!(
                glmix_cost(&cfg, 6, 6).unwrap().params() as usize,
                ps.num_scalars()
            );
        }
    }

    #[test]
    fn parallel_is_sum_of_single_branch_outputs() {
        let mut rng = ChaCha8Rng::seed_from_u64(2);
        let x = uniform(&[1, 8, 4, 4], &mut rng);
        let (ps, block) = build(GlMixConfig::new(8, 4, 2));
        let (y, _) = block.forward(&ps, &x).unwrap();
        let l = block.run_local(&ps, &x).unwrap();
        let (g, _) = block.run_global(&ps, &x).unwrap();
        for ((a, b), c) in y.data().iter().zip(l.data().iter()).zip(g.data().iter()) {
            assert!((a - (b + c)).abs() < 1e-12);
        }
    }

    #[test]
    fn instrumented_cost_matches_closed_form() {
        let mut rng = ChaCha8Rng::seed_from_u64(3);
        let x = uniform(&[1, 8, 8, 8], &mut rng);
        let variants = [
            (Layout::Parallel, LocalKind::DwConv, SlotInit::Pooling, 9),
            (Layout::GlobalOnly, LocalKind::DwConv, SlotInit::Learned, 4),
            (
                Layout::LocalOnly,
                LocalKind::WindowMhsa { window: 4 },
                SlotInit::Pooling,
                4,
            ),
            (
                Layout::SequentialLocalFirst,
                LocalKind::DwConv,
                SlotInit::Pooling,
                16,
            ),
        ];
        for (layout, local, slot_init, m) in variants {
            let mut cfg = GlMixConfig::new(8, m, 2);
            cfg.layout = layout;
            cfg.local = local;
            cfg.slot_init = slot_init;
            let (ps, block) = build(cfg);
            let (_, counts) = counter::count(|| block.forward(&ps, &x).unwrap());
            let cost = glmix_cost(&cfg, 8, 8).unwrap();
            assert_eq!(counts.scope_total("mixer.local"), cost.local.total());
            assert_eq!(counts.scope_total("mixer.cluster"), cost.cluster.total());
            assert_eq!(
                counts.scope_total("mixer.slot_attn"),
                cost.slot_attn.total()
            );
            assert_eq!(counts.scope_total("mixer.dispatch"), cost.dispatch.total());
        }
    }

    #[test]
    fn uneven_pooling_windows_are_counted() {
        let mut cfg = GlMixConfig::new(4, 9, 1);
        cfg.layout = Layout::GlobalOnly;
        let (ps, block) = build(cfg);
        let mut rng = ChaCha8Rng::seed_from_u64(5);
        let x = uniform(&[1, 4, 7, 5], &mut rng);
        let (_, counts) = counter::count(|| block.forward(&ps, &x).unwrap());
        assert_eq!(
            counts.scope_total("mixer.cluster"),
            glmix_cost(&cfg, 7, 5).unwrap().cluster.total()
        );
    }
}
