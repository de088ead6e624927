use std::fs;
use std::path::Path;

use serde::{Deserialize, Serialize};

use crate::error::{Error, Result};
use crate::glnet::ModelSpec;

pub const CONFIG_VERSION: u32 = 1;

/// A named spec (preset, ablation, evolution step) or a full inline spec.
#[derive(Debug, Clone, PartialEq, Serialize, Deserialize)]
#[serde(untagged)]
pub enum ModelRef {
    Name(String),
    Inline(ModelSpec),
}

impl ModelRef {
    pub fn resolve(&self) -> Result<ModelSpec> {
        match self {
            ModelRef::Name(n) => ModelSpec::by_name(n),
            ModelRef::Inline(s) => {
                s.validate()?;
                Ok(s.clone())
            }
        }
    }
}

#[derive(Debug, Clone, Copy, PartialEq, Serialize, Deserialize)]
#[serde(deny_unknown_fields)]
pub struct OptimizerConfig {
    pub lr: f64,
    pub weight_decay: f64,
    pub betas: [f64; 2],
    pub eps: f64,
    /// Global gradient-norm clip; `None` disables clipping.
    pub grad_clip: Option<f64>,
}

impl Default for OptimizerConfig {
    fn default() -> Self {
        OptimizerConfig {
            lr: 2e-3,
            weight_decay: 0.05,
            betas: [0.9, 0.999],
            eps: 1e-8,
            grad_clip: Some(5.0),
        }
    }
}

/// Linear warmup, then cosine decay to `min_lr`.
#[derive(Debug, Clone, Copy, PartialEq, Serialize, Deserialize)]
#[serde(deny_unknown_fields)]
pub struct ScheduleConfig {
    pub warmup_steps: usize,
    pub min_lr: f64,
}

impl Default for ScheduleConfig {
    fn default() -> Self {
        ScheduleConfig {
            warmup_steps: 100,
            min_lr: 1e-5,
        }
    }
}

#[derive(Debug, Clone, Copy, PartialEq, Serialize, Deserialize)]
#[serde(deny_unknown_fields)]
pub struct DataConfig {
    pub image_size: usize,
    pub num_classes: usize,
    /// Standard deviation of the background noise.
    pub noise: f64,
}

impl Default for DataConfig {
    fn default() -> Self {
        DataConfig {
            image_size: 32,
            num_classes: 4,
            noise: 0.3,
        }
    }
}

#[derive(Debug, Clone, PartialEq, Serialize, Deserialize)]
#[serde(deny_unknown_fields)]
pub struct TrainConfig {
    pub version: u32,
    pub model: ModelRef,
    #[serde(default)]
    pub optimizer: OptimizerConfig,
    #[serde(default)]
    pub schedule: ScheduleConfig,
    #[serde(default)]
    pub data: DataConfig,
    pub batch_size: usize,
    pub steps: usize,
    pub seed: u64,
    /// Held-out samples evaluated at the end (and every `eval_every` steps).
    pub eval_samples: usize,
    /// 0 evaluates only at the end.
    #[serde(default)]
    pub eval_every: usize,
}

impl Default for TrainConfig {
    fn default() -> Self {
        TrainConfig {
            version: CONFIG_VERSION,
            model: ModelRef::Name("micro".into()),
            optimizer: OptimizerConfig::default(),
            schedule: ScheduleConfig::default(),
            data: DataConfig::default(),
            batch_size: 32,
            steps: 2000,
            seed: 0,
            eval_samples: 512,
            eval_every: 0,
        }
    }
}

impl TrainConfig {
    pub fn validate(&self) -> Result<()> {
        if self.version != CONFIG_VERSION {
            return Err(Error::config(format!(
                "config version {} not supported (expected {CONFIG_VERSION})",
                self.version
            )));
        }
        let o = &self.optimizer;
        if !(o.lr > 0.0 && o.lr.is_finite()) {
            return Err(Error::config(format!("lr must be positive, got {}", o.lr)));
        }
        if o.weight_decay < 0.0 || o.betas.iter().any(|b| !(0.0..1.0).contains(b)) || o.eps <= 0.0 {
            return Err(Error::config(
                "weight decay must be >= 0, betas in [0, 1), eps > 0",
            ));
        }
        if o.grad_clip.is_some_and(|c| c <= 0.0) {
            return Err(Error::config("grad_clip must be positive"));
        }
        if self.schedule.min_lr < 0.0 || self.schedule.min_lr > o.lr {
            return Err(Error::config("min_lr must lie in [0, lr]"));
        }
        if self.steps == 0 || self.batch_size == 0 {
            return Err(Error::config("steps and batch_size must be at least 1"));
        }
        let spec = self.model.resolve()?;
        if spec.in_channels != super::data::CHANNELS {
            return Err(Error::config(format!(
                "synthetic images have {} channels, model expects {}",
                super::data::CHANNELS,
                spec.in_channels
            )));
        }
        spec.check_resolution(self.data.image_size, self.data.image_size)?;
        if spec.num_classes != self.data.num_classes {
            return Err(Error::config(format!(
                "model has {} classes, data has {}",
                spec.num_classes, self.data.num_classes
            )));
        }
        super::data::SyntheticDataset::new(self.data, 0).map(|_| ())
    }

    pub fn from_json(text: &str) -> Result<Self> {
        let c: TrainConfig = serde_json::from_str(text)?;
        c.validate()?;
        Ok(c)
    }

    pub fn to_json(&self) -> Result<String> {
        Ok(serde_json::to_string_pretty(self)?)
    }

    pub fn load(path: &Path) -> Result<Self> {
        TrainConfig::from_json(&fs::read_to_string(path)?)
    }

    pub fn save(&self, path: &Path) -> Result<()> {
        fs::write(path, self.to_json()? + "\n")?;
        Ok(())
    }
}
