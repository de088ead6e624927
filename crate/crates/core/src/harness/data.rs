use std::f64::consts::PI;

use rand::{Rng, SeedableRng};
use rand_chacha::ChaCha8Rng;
use rand_distr::{Distribution, Normal};

use super::config::DataConfig;
use crate::error::{Error, Result};
use crate::tensor::{Element, Tensor};

/// Stripe orientations in class order.
const ORIENTATIONS_DEG: [f64; 4] = [0.0, 90.0, 45.0, 135.0];
const PERIOD: f64 = 4.0;
const AMPLITUDE: f64 = 0.8;
pub const CHANNELS: usize = 3;

/// Procedural 4-way (up to 8-way) classification task. Class `c` is a
/// striped patch with orientation `c / 2` placed in the left (`c` even) or
/// right half of a noisy image. Stripe phase, tint and placement jitter are
/// random, so every class has the same pixel mean: telling classes apart
/// needs the local texture and its global position together.
#[derive(Debug, Clone, Copy, PartialEq)]
pub struct SyntheticDataset {
    pub config: DataConfig,
    pub seed: u64,
}

impl SyntheticDataset {
    pub fn new(config: DataConfig, seed: u64) -> Result<Self> {
        let c = config.num_classes;
        if c < 2 || c > 2 * ORIENTATIONS_DEG.len() || !c.is_multiple_of(2) {
            return Err(Error::config(format!(
                "synthetic data supports 2, 4, 6 or 8 classes, got {c}"
            )));
        }
        if config.image_size < 16 {
            return Err(Error::config(
                "synthetic images need at least 16 pixels per side",
            ));
        }
        if !(config.noise >= 0.0) {
            return Err(Error::config("noise must be non-negative"));
        }
        Ok(SyntheticDataset { config, seed })
    }

    pub fn label(&self, index: u64) -> usize {
        (index % self.config.num_classes as u64) as usize
    }

    /// Sample `index` as `[3, S, S]` values in `[-1, 1]`; a pure function of
    /// `(seed, index)`.
    pub fn sample(&self, index: u64) -> (Vec<f64>, usize) {
        let s = self.config.image_size;
        let label = self.label(index);
        let mut rng = ChaCha8Rng::seed_from_u64(self.seed);
        rng.set_stream(index);
        let patch = s * 3 / 8;
        let half = s / 2;
        let x0 = rng.gen_range(0..=half - patch) + if label % 2 == 1 { half } else { 0 };
        let y0 = rng.gen_range(0..=s - patch);
        let theta = ORIENTATIONS_DEG[label / 2].to_radians();
        let phase = rng.gen_range(0.0..2.0 * PI);
        let tint: [f64; CHANNELS] = std::array::from_fn(|_| rng.gen_range(0.5..1.0));
        let noise = Normal::new(0.0, self.config.noise.max(1e-12)).expect("valid std");
        let mut img = vec![0.0; CHANNELS * s * s];
        for c in 0..CHANNELS {
            for y in 0..s {
                for x in 0..s {
                    let mut v = if self.config.noise > 0.0 {
                        noise.sample(&mut rng)
                    } else {
                        0.0
                    };
                    if (x0..x0 + patch).contains(&x) && (y0..y0 + patch).contains(&y) {
                        let u = x as f64 * theta.cos() + y as f64 * theta.sin();
                        v += AMPLITUDE * tint[c] * (2.0 * PI * u / PERIOD + phase).sin();
                    }
                    img[(c * s + y) * s + x] = v.clamp(-1.0, 1.0);
                }
            }
        }
        (img, label)
    }

    /// Samples `start..start + len` as a `[len, 3, S, S]` batch.
    pub fn batch<T: Element>(&self, start: u64, len: usize) -> Result<(Tensor<T>, Vec<usize>)> {
        let s = self.config.image_size;
        let mut data = Vec::with_capacity(len * CHANNELS * s * s);
        let mut labels = Vec::with_capacity(len);
        for i in 0..len as u64 {
            let (img, label) = self.sample(start + i);
            data.extend(img);
            labels.push(label);
        }
        Ok((Tensor::from_f64(&[len, CHANNELS, s, s], &data)?, labels))
    }
}
