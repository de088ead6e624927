use serde::{Deserialize, Serialize};

use crate::error::{Error, Result};
use crate::glmix::{slot_grid_side, GlMixConfig, Layout, LocalKind, SlotInit};
use crate::nn::heads_for;

/// Declarative description of a four-stage backbone.
#[derive(Debug, Clone, PartialEq, Serialize, Deserialize)]
#[serde(deny_unknown_fields)]
pub struct ModelSpec {
    pub name: String,
    pub base_channels: usize,
    pub ffn_ratio: usize,
    pub blocks: [usize; 4],
    pub num_slots: usize,
    pub kernel: usize,
    /// Channels per attention head.
    pub head_dim: usize,
    #[serde(default)]
    pub layout: Layout,
    #[serde(default)]
    pub local: LocalKind,
    #[serde(default)]
    pub slot_init: SlotInit,
    pub overlapped_embed: bool,
    pub hybrid_stage3: bool,
    pub conv_pos_enc: bool,
    pub conv_ffn: bool,
    pub num_classes: usize,
    #[serde(default = "default_in_channels")]
    pub in_channels: usize,
    /// Stochastic depth rate of the last block, ramped linearly from 0.
    #[serde(default)]
    pub drop_path: f64,
}

fn default_in_channels() -> usize {
    3
}

/// What mixes tokens inside a block.
#[derive(Debug, Clone, Copy, PartialEq, Eq)]
pub enum MixerKind {
    GlMix,
    FullAttention,
}

pub const PRESETS: [&str; 5] = ["stl", "4g", "9g", "16g", "micro"];

pub const ABLATIONS: [&str; 13] = [
    "local_only",
    "global_only",
    "seq_global_first",
    "seq_local_first",
    "wmhsa_local",
    "static_slots",
    "k3",
    "k7",
    "slots9",
    "slots25",
    "slots36",
    "slots49",
    "slots81",
];

impl ModelSpec {
    /// The Swin-T-shaped base model without the later architecture designs.
    pub fn stl() -> Self {
        ModelSpec {
            name: "stl".into(),
            base_channels: 96,
            ffn_ratio: 4,
            blocks: [2, 2, 6, 2],
            num_slots: 64,
            kernel: 5,
            head_dim: 32,
            layout: Layout::Parallel,
            local: LocalKind::DwConv,
            slot_init: SlotInit::Pooling,
            overlapped_embed: false,
            hybrid_stage3: false,
            conv_pos_enc: false,
            conv_ffn: false,
            num_classes: 1000,
            in_channels: 3,
            drop_path: 0.2,
        }
    }

    fn advanced(name: &str, base_channels: usize, drop_path: f64) -> Self {
        ModelSpec {
            name: name.into(),
            base_channels,
            ffn_ratio: 3,
            blocks: [4, 4, 18, 4],
            overlapped_embed: true,
            hybrid_stage3: true,
            conv_pos_enc: true,
            conv_ffn: true,
            drop_path,
            ..ModelSpec::stl()
        }
    }

    /// Desk-scale model for 32×32 inputs and 4 classes.
    pub fn micro() -> Self {
        ModelSpec {
            name: "micro".into(),
            base_channels: 16,
            blocks: [1, 1, 2, 1],
            num_slots: 4,
            head_dim: 8,
            num_classes: 4,
            drop_path: 0.0,
            ..ModelSpec::stl()
        }
    }

    pub fn preset(name: &str) -> Result<Self> {
        match name {
            "stl" => Ok(ModelSpec::stl()),
            "4g" => Ok(ModelSpec::advanced("4g", 64, 0.15)),
            "9g" => Ok(ModelSpec::advanced("9g", 96, 0.3)),
            "16g" => Ok(ModelSpec::advanced("16g", 128, 0.4)),
            "micro" => Ok(ModelSpec::micro()),
            _ => Err(Error::config(format!(
                "unknown model preset `{name}` (expected one of {})",
                PRESETS.join(", ")
            ))),
        }
    }

    /// The base model with exactly one ablated design choice.
    pub fn ablation(name: &str) -> Result<Self> {
        ModelSpec::stl().with_ablation(name)
    }

    /// This spec with one ablated design choice, renamed `<name>_<ablation>`.
    pub fn with_ablation(&self, name: &str) -> Result<Self> {
        let mut spec = self.clone();
        match name {
            "local_only" => spec.layout = Layout::LocalOnly,
            "global_only" => spec.layout = Layout::GlobalOnly,
            "seq_global_first" => spec.layout = Layout::SequentialGlobalFirst,
            "seq_local_first" => spec.layout = Layout::SequentialLocalFirst,
            "wmhsa_local" => spec.local = LocalKind::WindowMhsa { window: 7 },
            "static_slots" => spec.slot_init = SlotInit::Learned,
            "k3" => spec.kernel = 3,
            "k7" => spec.kernel = 7,
            "slots9" => spec.num_slots = 9,
            "slots25" => spec.num_slots = 25,
            "slots36" => spec.num_slots = 36,
            "slots49" => spec.num_slots = 49,
            "slots81" => spec.num_slots = 81,
            _ => {
                return Err(Error::config(format!(
                    "unknown ablation `{name}` (expected one of {})",
                    ABLATIONS.join(", ")
                )))
            }
        }
        spec.name = format!("{}_{name}", self.name);
        Ok(spec)
    }

    /// Preset, ablation, or evolution-step name.
    pub fn by_name(name: &str) -> Result<Self> {
        if let Ok(spec) = ModelSpec::preset(name) {
            return Ok(spec);
        }
        if let Some(ablation) = name.strip_prefix("stl_") {
            return ModelSpec::ablation(ablation);
        }
        if let Some(ablation) = name.strip_prefix("micro_") {
            return ModelSpec::micro().with_ablation(ablation);
        }
        if let Some(spec) = ModelSpec::evolution().into_iter().find(|s| s.name == name) {
            return Ok(spec);
        }
        ModelSpec::ablation(name).map_err(|_| {
            Error::config(format!(
                "unknown model `{name}`: not a preset, ablation or evolution step"
            ))
        })
    }

    /// The five designs applied one after another, starting from the base model.
    pub fn evolution() -> Vec<ModelSpec> {
        let base = ModelSpec::stl();
        let overlap = ModelSpec {
            name: "evo_overlap".into(),
            overlapped_embed: true,
            ..base.clone()
        };
        let hybrid = ModelSpec {
            name: "evo_hybrid".into(),
            hybrid_stage3: true,
            ..overlap.clone()
        };
        let cpe = ModelSpec {
            name: "evo_cpe".into(),
            conv_pos_enc: true,
            ..hybrid.clone()
        };
        let deeper = ModelSpec {
            name: "evo_deeper".into(),
            base_channels: 64,
            ffn_ratio: 3,
            blocks: [4, 4, 18, 4],
            ..cpe.clone()
        };
        let conv_ffn = ModelSpec {
            name: "evo_conv_ffn".into(),
            conv_ffn: true,
            ..deeper.clone()
        };
        vec![base, overlap, hybrid, cpe, deeper, conv_ffn]
    }

    pub fn stage_channels(&self, stage: usize) -> usize {
        self.base_channels << stage
    }

    pub fn heads(&self, stage: usize) -> usize {
        heads_for(self.stage_channels(stage), self.head_dim)
    }

    pub fn total_blocks(&self) -> usize {
        self.blocks.iter().sum()
    }

    pub fn mixer_kind(&self, stage: usize, block: usize) -> MixerKind {
        if stage == 3 || (self.hybrid_stage3 && stage == 2 && block % 2 == 1) {
            MixerKind::FullAttention
        } else {
            MixerKind::GlMix
        }
    }

    pub fn glmix_config(&self, stage: usize) -> GlMixConfig {
        GlMixConfig {
            channels: self.stage_channels(stage),
            num_slots: self.num_slots,
            kernel: self.kernel,
            heads: self.heads(stage),
            layout: self.layout,
            local: self.local,
            slot_init: self.slot_init,
        }
    }

    /// Drop-path rate of the `index`-th block (global order).
    pub fn drop_path_rate(&self, index: usize) -> f64 {
        let n = self.total_blocks();
        if n <= 1 {
            0.0
        } else {
            self.drop_path * index as f64 / (n - 1) as f64
        }
    }

    pub fn validate(&self) -> Result<()> {
        if self.base_channels == 0
            || self.ffn_ratio == 0
            || self.num_classes == 0
            || self.in_channels == 0
        {
            return Err(Error::config(
                "channels, FFN ratio and class count must be positive",
            ));
        }
        if self.blocks.contains(&0) {
            return Err(Error::config(format!(
                "every stage needs a block, got {:?}",
                self.blocks
            )));
        }
        slot_grid_side(self.num_slots)?;
        if self.kernel.is_multiple_of(2) {
            return Err(Error::config(format!(
                "local kernel must be odd, got {}",
                self.kernel
            )));
        }
        if self.head_dim == 0 {
            return Err(Error::config("head_dim must be positive"));
        }
        if !(0.0..1.0).contains(&self.drop_path) {
            return Err(Error::config(format!(
                "drop_path must lie in [0, 1), got {}",
                self.drop_path
            )));
        }
        for stage in 0..4 {
            let c = self.stage_channels(stage);
            if !c.is_multiple_of(self.heads(stage)) {
                return Err(Error::config(format!(
                    "stage {stage}: {c} channels not divisible into heads"
                )));
            }
        }
        if self.overlapped_embed && self.base_channels < 2 {
            return Err(Error::config(
                "overlapped embedding needs at least 2 base channels",
            ));
        }
        Ok(())
    }

    /// Inputs must reduce to whole grids at every stage.
    pub fn check_resolution(&self, h: usize, w: usize) -> Result<()> {
        if h == 0 || w == 0 || !h.is_multiple_of(32) || !w.is_multiple_of(32) {
            return Err(Error::invalid(
                "glnet",
                format!("input resolution {h}x{w} is not divisible by 32"),
            ));
        }
        Ok(())
    }
}

#[cfg(test)]
mod tests {
    use super::*;

    #[test]
    fn presets_and_ablations_validate() {
        for name in PRESETS {
            ModelSpec::preset(name).unwrap().validate().unwrap();
        }
        for name in ABLATIONS {
            let spec = ModelSpec::ablation(name).unwrap();
            spec.validate().unwrap();
            assert_eq!(ModelSpec::by_name(&spec.name).unwrap(), spec);
        }
        for spec in ModelSpec::evolution() {
            spec.validate().unwrap();
            assert_eq!(ModelSpec::by_name(&spec.name).unwrap(), spec);
        }
        let m = ModelSpec::by_name("micro_global_only").unwrap();
        assert_eq!((m.layout, m.base_channels), (Layout::GlobalOnly, 16));
        assert!(ModelSpec::ablation("kmeans").is_err());
        assert!(ModelSpec::preset("tiny").is_err());
    }

    #[test]
    fn ablations_change_exactly_one_field() {
        let base = serde_json::to_value(ModelSpec::stl()).unwrap();
        for name in ABLATIONS {
            let spec = serde_json::to_value(ModelSpec::ablation(name).unwrap()).unwrap();
            let changed: Vec<&String> = base
                .as_object()
                .unwrap()
                .iter()
                .filter(|(k, v)| *k != "name" && spec[k.as_str()] != **v)
                .map(|(k, _)| k)
                .collect();
            assert_eq!(changed.len(), 1, "{name}: {changed:?}");
        }
    }

    #[test]
    fn hybrid_alternates_starting_with_glmix() {
        let spec = ModelSpec::preset("4g").unwrap();
        let kinds: Vec<MixerKind> = (0..4).map(|b| spec.mixer_kind(2, b)).collect();
        assert_eq!(
            kinds,
            [
                MixerKind::GlMix,
                MixerKind::FullAttention,
                MixerKind::GlMix,
                MixerKind::FullAttention
            ]
        );
        assert_eq!(spec.mixer_kind(3, 0), MixerKind::FullAttention);
        assert_eq!(ModelSpec::stl().mixer_kind(2, 1), MixerKind::GlMix);
    }

    #[test]
    fn spec_json_round_trips_and_rejects_unknown_keys() {
        let spec = ModelSpec::preset("9g").unwrap();
        let text = serde_json::to_string(&spec).unwrap();
        assert_eq!(serde_json::from_str::<ModelSpec>(&text).unwrap(), spec);
        let mut v: serde_json::Value = serde_json::from_str(&text).unwrap();
        v["extra"] = serde_json::json!(1);
        assert!(serde_json::from_value::<ModelSpec>(v).is_err());
    }

    #[test]
    fn drop_path_ramps_linearly() {
        let spec = ModelSpec::stl();
        assert_eq!(spec.drop_path_rate(0), 0.0);
        assert!((spec.drop_path_rate(11) - 0.2).abs() < 1e-15);
    }
}
