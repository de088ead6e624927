use rand::{Rng, SeedableRng};
use rand_chacha::ChaCha8Rng;

use super::spec::{MixerKind, ModelSpec};
use crate::error::{Error, Result};
use crate::glmix::{ClusterState, GlMix, SIGMA_FLOOR};
use crate::nn::{
    grid_attention, ConvPosEnc, Downsample, Ffn, Init, LayerNorm, Linear, Mhsa, ParamStore,
    PatchEmbed,
};
use crate::tensor::{counter, Element, Tensor};

#[derive(Debug, Clone)]
pub enum Mixer {
    GlMix(GlMix),
    Attention(Mhsa),
}

/// Pre-norm block: `[x + CPE(x)]`, `x + mixer(LN(x))`, `x + FFN(LN(x))`.
#[derive(Debug, Clone)]
pub struct Block {
    pub name: String,
    pub index: usize,
    pub cpe: Option<ConvPosEnc>,
    pub norm1: LayerNorm,
    pub mixer: Mixer,
    pub norm2: LayerNorm,
    pub ffn: Ffn,
    pub drop_path: f64,
}

/// Network structure. Holds parameter ids only, so one structure serves
/// stores of any element type.
#[derive(Debug, Clone)]
pub struct GlNet {
    pub spec: ModelSpec,
    pub stem: PatchEmbed,
    pub stages: Vec<Vec<Block>>,
    pub downsamples: Vec<Downsample>,
    pub norm: LayerNorm,
    pub head: Linear,
}

/// Clustering state of one GLMix block.
#[derive(Debug, Clone)]
pub struct BlockState<T: Element> {
    /// Global block index (all stages, forward order).
    pub block: usize,
    pub name: String,
    pub state: ClusterState<T>,
}

#[derive(Default)]
pub struct ForwardOptions<'a> {
    pub collect_states: bool,
    /// Training mode: enables drop-path, drawing its gates from this stream.
    pub train_rng: Option<&'a mut ChaCha8Rng>,
}

pub struct ForwardOutput<T: Element> {
    pub logits: Tensor<T>,
    pub states: Vec<BlockState<T>>,
    /// Feature shape at the end of each stage.
    pub stage_shapes: Vec<Vec<usize>>,
}

/// Structure plus parameter values.
#[derive(Debug, Clone)]
pub struct GlNetModel<T: Element = f64> {
    pub net: GlNet,
    pub params: ParamStore<T>,
}

fn scope(name: &str) -> counter::ScopeGuard {
    counter::scope(|| name.to_string())
}

impl Block {
    fn new<T: Element>(
        init: &mut Init<'_, T>,
        spec: &ModelSpec,
        stage: usize,
        block: usize,
        index: usize,
    ) -> Result<Self> {
        let name = format!("stages.{stage}.blocks.{block}");
        let mut s = init.sub(&name);
        let c = spec.stage_channels(stage);
        let cpe = if spec.conv_pos_enc {
            Some(ConvPosEnc::new(&mut s, "cpe", c)?)
        } else {
            None
        };
        let norm1 = LayerNorm::new(&mut s, "norm1", c)?;
        let mixer = match spec.mixer_kind(stage, block) {
            MixerKind::GlMix => {
                Mixer::GlMix(GlMix::new(&mut s, "mixer", spec.glmix_config(stage))?)
            }
            MixerKind::FullAttention => {
                Mixer::Attention(Mhsa::new(&mut s, "attn", c, spec.heads(stage))?)
            }
        };
        let norm2 = LayerNorm::new(&mut s, "norm2", c)?;
        let ffn = Ffn::new(&mut s, "ffn", c, spec.ffn_ratio, spec.conv_ffn)?;
        Ok(Block {
            name,
            index,
            cpe,
            norm1,
            mixer,
            norm2,
            ffn,
            drop_path: spec.drop_path_rate(index),
        })
    }

    pub fn num_params(&self) -> usize {
        self.cpe.as_ref().map_or(0, ConvPosEnc::num_params)
            + self.norm1.num_params()
            + match &self.mixer {
                Mixer::GlMix(m) => m.num_params(),
                Mixer::Attention(a) => a.num_params(),
            }
            + self.norm2.num_params()
            + self.ffn.num_params()
    }

    /// Residual with optional per-sample stochastic depth.
    fn residual<T: Element>(
        &self,
        x: &Tensor<T>,
        branch: Tensor<T>,
        rng: Option<&mut ChaCha8Rng>,
    ) -> Result<Tensor<T>> {
        match rng {
            Some(rng) if self.drop_path > 0.0 => {
                let keep = 1.0 - self.drop_path;
                let b = x.shape()[0];
                let gates: Vec<f64> = (0..b)
                    .map(|_| {
                        if rng.gen::<f64>() < keep {
                            1.0 / keep
                        } else {
                            0.0
                        }
                    })
                    .collect();
                x.add(&branch.mul_per_sample(&Tensor::from_f64(&[b], &gates)?)?)
            }
            _ => x.add(&branch),
        }
    }

    fn forward<T: Element>(
        &self,
        ps: &ParamStore<T>,
        x: &Tensor<T>,
        mut rng: Option<&mut ChaCha8Rng>,
    ) -> Result<(Tensor<T>, Option<ClusterState<T>>)> {
        let mut x = x.clone();
        if let Some(cpe) = &self.cpe {
            let _g = scope(&format!("{}.cpe", self.name));
            x = cpe.forward(ps, &x)?;
        }
        let h = {
            let _g = scope(&format!("{}.norm1", self.name));
            self.norm1.forward(ps, &x)?
        };
        let (mixed, state) = match &self.mixer {
            Mixer::GlMix(m) => m.forward(ps, &h)?,
            Mixer::Attention(a) => {
                let _g = scope(&format!("{}.attn", self.name));
                (grid_attention(a, ps, &h)?, None)
            }
        };
        x = self.residual(&x, mixed, rng.as_deref_mut())?;
        let h = {
            let _g = scope(&format!("{}.norm2", self.name));
            self.norm2.forward(ps, &x)?
        };
        let f = {
            let _g = scope(&format!("{}.ffn", self.name));
            self.ffn.forward(ps, &h)?
        };
        Ok((self.residual(&x, f, rng)?, state))
    }
}

impl GlNet {
    pub fn new<T: Element>(spec: &ModelSpec, init: &mut Init<'_, T>) -> Result<Self> {
        spec.validate()?;
        let c = spec.base_channels;
        let stem = PatchEmbed::new(init, "stem", spec.in_channels, c, spec.overlapped_embed)?;
        let mut stages = Vec::with_capacity(4);
        let mut downsamples = Vec::with_capacity(3);
        let mut index = 0;
        for stage in 0..4 {
            let mut blocks = Vec::with_capacity(spec.blocks[stage]);
            for b in 0..spec.blocks[stage] {
                blocks.push(Block::new(init, spec, stage, b, index)?);
                index += 1;
            }
            stages.push(blocks);
            if stage < 3 {
                downsamples.push(Downsample::new(
                    init,
                    &format!("downsamples.{stage}"),
                    spec.stage_channels(stage),
                    spec.overlapped_embed,
                )?);
            }
        }
        let last = spec.stage_channels(3);
        Ok(GlNet {
            spec: spec.clone(),
            stem,
            stages,
            downsamples,
            norm: LayerNorm::new(init, "head.norm", last)?,
            head: Linear::new(init, "head.fc", last, spec.num_classes)?,
        })
    }

    pub fn blocks(&self) -> impl Iterator<Item = &Block> {
        self.stages.iter().flatten()
    }

    pub fn num_params(&self) -> usize {
        self.stem.num_params()
            + self.blocks().map(Block::num_params).sum::<usize>()
            + self
                .downsamples
                .iter()
                .map(Downsample::num_params)
                .sum::<usize>()
            + self.norm.num_params()
            + self.head.num_params()
    }

    /// Global index of the first block of stage 3 (1-based stage numbering),
    /// the default block for slot visualization.
    pub fn default_visual_block(&self) -> usize {
        self.stages[0].len() + self.stages[1].len()
    }

    pub fn forward<T: Element>(
        &self,
        ps: &ParamStore<T>,
        images: &Tensor<T>,
        mut opts: ForwardOptions<'_>,
    ) -> Result<ForwardOutput<T>> {
        let s = images.shape();
        if s.len() != 4 || s[1] != self.spec.in_channels {
            return Err(Error::invalid(
                "glnet",
                format!(
                    "expected [B, {}, H, W] images, got {s:?}",
                    self.spec.in_channels
                ),
            ));
        }
        self.spec.check_resolution(s[2], s[3])?;
        let mut x = {
            let _g = scope("stem");
            self.stem.forward(ps, images)?
        };
        let mut states = Vec::new();
        let mut stage_shapes = Vec::with_capacity(4);
        for (stage, blocks) in self.stages.iter().enumerate() {
            for block in blocks {
                let (y, state) = block.forward(ps, &x, opts.train_rng.as_deref_mut())?;
                x = y;
                if let (true, Some(state)) = (opts.collect_states, state) {
                    states.push(BlockState {
                        block: block.index,
                        name: block.name.clone(),
                        state,
                    });
                }
            }
            stage_shapes.push(x.shape().to_vec());
            if stage < 3 {
                let _g = scope(&format!("downsamples.{stage}"));
                x = self.downsamples[stage].forward(ps, &x)?;
            }
        }
        let _g = scope("head");
        let pooled = self
            .norm
            .forward(ps, &x)?
            .adaptive_avg_pool2d(1, 1)?
            .flatten(1, 3)?;
        let logits = self.head.forward(ps, &pooled)?;
        Ok(ForwardOutput {
            logits,
            states,
            stage_shapes,
        })
    }
}

impl<T: Element> GlNetModel<T> {
    /// Deterministic construction: the same spec and seed give bitwise
    /// identical parameters.
    pub fn build(spec: &ModelSpec, seed: u64) -> Result<Self> {
        let mut params = ParamStore::new();
        let mut rng = ChaCha8Rng::seed_from_u64(seed);
        let net = GlNet::new(spec, &mut Init::new(&mut params, &mut rng))?;
        Ok(GlNetModel { net, params })
    }

    pub fn spec(&self) -> &ModelSpec {
        &self.net.spec
    }

    /// Inference forward: no drop-path, no states.
    pub fn logits(&self, images: &Tensor<T>) -> Result<Tensor<T>> {
        Ok(self
            .net
            .forward(&self.params, images, ForwardOptions::default())?
            .logits)
    }

    pub fn forward(
        &self,
        images: &Tensor<T>,
        opts: ForwardOptions<'_>,
    ) -> Result<ForwardOutput<T>> {
        self.net.forward(&self.params, images, opts)
    }

    /// Keeps every clustering scale at or above its floor.
    pub fn apply_constraints(&mut self) -> Result<()> {
        let sigmas: Vec<_> = self
            .net
            .blocks()
            .filter_map(|b| match &b.mixer {
                Mixer::GlMix(m) => m.sigma,
                Mixer::Attention(_) => None,
            })
            .collect();
        let floor = T::from_f64_lossy(SIGMA_FLOOR);
        for id in sigmas {
            let v = self.params.get(id).data()[0];
            if !(v >= floor) {
                self.params.set(id, vec![floor])?;
            }
        }
        Ok(())
    }

    pub fn cast<U: Element>(&self) -> GlNetModel<U> {
        GlNetModel {
            net: self.net.clone(),
            params: self.params.cast(),
        }
    }
}
