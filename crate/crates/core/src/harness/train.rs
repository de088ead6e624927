use std::fs;
use std::path::Path;

use rand::SeedableRng;
use rand_chacha::ChaCha8Rng;
use serde::Serialize;

use super::config::TrainConfig;
use super::data::SyntheticDataset;
use super::optim::{learning_rate, AdamW};
use crate::error::{Error, Result};
use crate::glnet::{checkpoint, ForwardOptions, GlNetModel};
use crate::tensor::{no_grad, Element, Tensor};

/// Held-out samples start at this index, far past any training stream.
pub const EVAL_OFFSET: u64 = 1 << 48;
const EVAL_BATCH: usize = 64;

#[derive(Debug, Clone, Copy, PartialEq, Serialize)]
pub struct TrainRecord {
    pub step: usize,
    pub lr: f64,
    pub loss: f64,
    /// Accuracy on this step's (fresh) batch.
    pub accuracy: f64,
    pub grad_norm: f64,
}

#[derive(Debug, Clone, Copy, PartialEq, Serialize)]
pub struct EvalResult {
    pub samples: usize,
    pub loss: f64,
    pub accuracy: f64,
}

pub struct TrainOutcome {
    pub model: GlNetModel<f32>,
    pub records: Vec<TrainRecord>,
    /// `(step, result)` for periodic and final evaluations.
    pub evals: Vec<(usize, EvalResult)>,
}

impl TrainOutcome {
    pub fn final_eval(&self) -> EvalResult {
        self.evals
            .last()
            .expect("training always evaluates at the end")
            .1
    }
}

fn argmax_hits<T: Element>(logits: &Tensor<T>, labels: &[usize]) -> usize {
    let k = logits.shape()[1];
    logits
        .data()
        .chunks(k)
        .zip(labels)
        .filter(|(row, &y)| {
            let best = row
                .iter()
                .enumerate()
                .fold(0, |b, (i, v)| if *v > row[b] { i } else { b });
            best == y
        })
        .count()
}

/// Mean loss and accuracy over samples `start..start + count`.
pub fn evaluate<T: Element>(
    model: &GlNetModel<T>,
    data: &SyntheticDataset,
    start: u64,
    count: usize,
) -> Result<EvalResult> {
    let _g = no_grad();
    let (mut loss, mut hits, mut done) = (0.0, 0, 0);
    while done < count {
        let len = EVAL_BATCH.min(count - done);
        let (x, y) = data.batch::<T>(start + done as u64, len)?;
        let logits = model.logits(&x)?;
        loss += logits
            .cross_entropy(&y)?
            .item()?
            .to_f64()
            .unwrap_or(f64::NAN)
            * len as f64;
        hits += argmax_hits(&logits, &y);
        done += len;
    }
    Ok(EvalResult {
        samples: count,
        loss: loss / count.max(1) as f64,
        accuracy: hits as f64 / count.max(1) as f64,
    })
}

/// Runs the configured training. Deterministic given the config: model
/// init, data and drop-path gates all derive from `config.seed`.
pub fn train(
    config: &TrainConfig,
    mut on_record: impl FnMut(&TrainRecord),
) -> Result<TrainOutcome> {
    config.validate()?;
    let spec = config.model.resolve()?;
    let data = SyntheticDataset::new(config.data, config.seed)?;
    let mut model = GlNetModel::<f32>::build(&spec, config.seed)?;
    let mut opt = AdamW::new(config.optimizer, &model.params);
    let mut gates = ChaCha8Rng::seed_from_u64(config.seed);
    gates.set_stream(1);
    let b = config.batch_size;
    let mut records = Vec::with_capacity(config.steps);
    let mut evals = Vec::new();
    for step in 0..config.steps {
        let lr = learning_rate(step, config.steps, config.optimizer.lr, &config.schedule);
        let (x, y) = data.batch::<f32>((step * b) as u64, b)?;
        let out = model.forward(
            &x,
            ForwardOptions {
                train_rng: Some(&mut gates),
                ..Default::default()
            },
        )?;
        let loss = out.logits.cross_entropy(&y)?;
        let loss_value = loss.item()? as f64;
        if !loss_value.is_finite() {
            return Err(Error::NonFiniteLoss {
                step,
                param_norm: model.params.l2_norm(),
            });
        }
        loss.backward()?;
        let mut grads = AdamW::gradients(&model.params);
        let grad_norm = AdamW::clip(&mut grads, config.optimizer.grad_clip);
        if !grad_norm.is_finite() {
            return Err(Error::NonFiniteLoss {
                step,
                param_norm: model.params.l2_norm(),
            });
        }
        opt.step(&mut model.params, &grads, lr)?;
        model.apply_constraints()?;
        let record = TrainRecord {
            step,
            lr,
            loss: loss_value,
            accuracy: argmax_hits(&out.logits, &y) as f64 / b as f64,
            grad_norm,
        };
        on_record(&record);
        records.push(record);
        let last = step + 1 == config.steps;
        if last || (config.eval_every > 0 && (step + 1) % config.eval_every == 0) {
            evals.push((
                step + 1,
                evaluate(&model, &data, EVAL_OFFSET, config.eval_samples)?,
            ));
        }
    }
    Ok(TrainOutcome {
        model,
        records,
        evals,
    })
}

pub const METRICS_FILE: &str = "metrics.csv";
pub const EVAL_FILE: &str = "eval.csv";
pub const CHECKPOINT_FILE: &str = "checkpoint.glnet";
pub const CONFIG_FILE: &str = "config.json";

/// Trains and writes the per-step CSV log, the evaluation CSV, the config
/// and a checkpoint into `out_dir`.
pub fn train_to_dir(
    config: &TrainConfig,
    out_dir: &Path,
    progress: impl FnMut(&TrainRecord),
) -> Result<TrainOutcome> {
    fs::create_dir_all(out_dir)?;
    config.save(&out_dir.join(CONFIG_FILE))?;
    let outcome = train(config, progress)?;
    let csv_err = |e: csv::Error| Error::Io(std::io::Error::other(e));
    let mut log = csv::Writer::from_path(out_dir.join(METRICS_FILE)).map_err(csv_err)?;
    for r in &outcome.records {
        log.serialize(r).map_err(csv_err)?;
    }
    log.flush()?;
    let mut ev = csv::Writer::from_path(out_dir.join(EVAL_FILE)).map_err(csv_err)?;
    ev.write_record(["step", "samples", "loss", "accuracy"])
        .map_err(csv_err)?;
    for (step, e) in &outcome.evals {
        ev.write_record([
            step.to_string(),
            e.samples.to_string(),
            e.loss.to_string(),
            e.accuracy.to_string(),
        ])
        .map_err(csv_err)?;
    }
    ev.flush()?;
    checkpoint::save(&outcome.model, &out_dir.join(CHECKPOINT_FILE))?;
    Ok(outcome)
}
