//! Optimizer, schedule and the staged training protocol: CTC pretraining
//! of the encoder, next-symbol pretraining of the prediction network, then
//! RNN-T fine-tuning of the whole transducer.

mod config;
mod objective;
mod optim;
mod run;

pub use config::{DataConfig, DataSource, Dataset, TrainConfig, VALID_SEED_BASE};
pub use objective::{evaluate, objective, Stage};
pub use optim::{adam_step, clip_grad_norm, grad_norm, AdamConfig, AdamState, LrSchedule};
pub use run::{
    combine_pretrained, fresh_model, initial_model, load_stage, run_stage, train, EpochMetrics, RunDir, METRICS_HEADER,
};
