//! Desk-scale training on procedural images: config files, the synthetic
//! dataset, AdamW with warmup and cosine decay, the training loop and the
//! model-level gradient checks.

mod config;
mod data;
mod gradcheck;
mod optim;
mod train;

pub use config::{
    DataConfig, ModelRef, OptimizerConfig, ScheduleConfig, TrainConfig, CONFIG_VERSION,
};
pub use data::{SyntheticDataset, CHANNELS};
pub use gradcheck::model_gradcheck_cases;
pub use optim::{learning_rate, AdamW};
pub use train::{
    evaluate, train, train_to_dir, EvalResult, TrainOutcome, TrainRecord, CHECKPOINT_FILE,
    CONFIG_FILE, EVAL_FILE, EVAL_OFFSET, METRICS_FILE,
};
