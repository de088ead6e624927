use std::f64::consts::PI;

use super::config::{OptimizerConfig, ScheduleConfig};
use crate::error::Result;
use crate::nn::ParamStore;
use crate::tensor::Element;

/// Learning rate at `step` (0-based) of `total`: linear warmup to `base`,
/// then cosine decay to `min_lr` at the last step.
pub fn learning_rate(step: usize, total: usize, base: f64, schedule: &ScheduleConfig) -> f64 {
    let w = schedule.warmup_steps.min(total);
    if step < w {
        return base * (step + 1) as f64 / w as f64;
    }
    let span = (total - w).max(1) as f64;
    let progress = ((step - w) as f64 / span).min(1.0);
    schedule.min_lr + 0.5 * (base - schedule.min_lr) * (1.0 + (PI * progress).cos())
}

/// Adam with decoupled weight decay. Moments are kept in f64. Decay applies
/// to matrices and kernels only, not to biases, norm gains or scalars.
#[derive(Debug, Clone)]
pub struct AdamW {
    pub config: OptimizerConfig,
    m: Vec<Vec<f64>>,
    v: Vec<Vec<f64>>,
    t: u64,
}

impl AdamW {
    pub fn new<T: Element>(config: OptimizerConfig, params: &ParamStore<T>) -> Self {
        let zeros: Vec<Vec<f64>> = params
            .tensors()
            .iter()
            .map(|t| vec![0.0; t.numel()])
            .collect();
        AdamW {
            config,
            m: zeros.clone(),
            v: zeros,
            t: 0,
        }
    }

    /// Current gradients as f64, zeros for parameters the loss did not reach.
    pub fn gradients<T: Element>(params: &ParamStore<T>) -> Vec<Vec<f64>> {
        params
            .tensors()
            .iter()
            .map(|t| match t.grad() {
                Some(g) => g.iter().map(|v| v.to_f64().unwrap_or(f64::NAN)).collect(),
                None => vec![0.0; t.numel()],
            })
            .collect()
    }

    /// Scales `grads` in place to global L2 norm at most `max`; returns the
    /// norm before clipping.
    pub fn clip(grads: &mut [Vec<f64>], max: Option<f64>) -> f64 {
        let norm = grads.iter().flatten().map(|g| g * g).sum::<f64>().sqrt();
        if let Some(max) = max {
            if norm > max {
                let k = max / norm;
                grads.iter_mut().flatten().for_each(|g| *g *= k);
            }
        }
        norm
    }

    /// One update with learning rate `lr`. Parameters are replaced by fresh
    /// leaves, which also clears their gradients.
    pub fn step<T: Element>(
        &mut self,
        params: &mut ParamStore<T>,
        grads: &[Vec<f64>],
        lr: f64,
    ) -> Result<()> {
        self.t += 1;
        let [b1, b2] = self.config.betas;
        let c1 = 1.0 - b1.powf(self.t as f64);
        let c2 = 1.0 - b2.powf(self.t as f64);
        let ids: Vec<_> = params
            .iter()
            .map(|(id, _, t)| (id, t.ndim() >= 2))
            .collect();
        for (i, (id, decay)) in ids.into_iter().enumerate() {
            let (m, v, g) = (&mut self.m[i], &mut self.v[i], &grads[i]);
            let shrink = if decay {
                1.0 - lr * self.config.weight_decay
            } else {
                1.0
            };
            let data: Vec<T> = params
                .get(id)
                .data()
                .iter()
                .enumerate()
                .map(|(j, p)| {
                    m[j] = b1 * m[j] + (1.0 - b1) * g[j];
                    v[j] = b2 * v[j] + (1.0 - b2) * g[j] * g[j];
                    let update = (m[j] / c1) / ((v[j] / c2).sqrt() + self.config.eps);
                    let p = p.to_f64().unwrap_or(f64::NAN);
                    T::from_f64_lossy(p * shrink - lr * update)
                })
                .collect();
            params.set(id, data)?;
        }
        Ok(())
    }
}
