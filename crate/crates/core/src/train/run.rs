//! The training loop and the run directory.
//!
//! ```text
//! <run>/config.txt                      config of the latest stage run
//! <run>/metrics.csv                     one row per stage epoch
//! <run>/checkpoints/<stage>/epoch-NNN/  the most recent epochs
//! <run>/checkpoints/<stage>/final/      lossless, input to later stages
//! <run>/checkpoints/<stage>/train.toml  config of that stage
//! ```

use std::fs;
use std::io::Write;
use std::path::{Path, PathBuf};

use rand::seq::SliceRandom;
use rand::{RngCore, SeedableRng};
use rand_chacha::ChaCha8Rng;

use crate::error::{Error, Result};
use crate::numcore::{ParamGrads, Tensor};
use crate::transducer::{load_checkpoint, load_partial, save_checkpoint, save_checkpoint_as, Dtype, TransducerModel};

use super::config::{Dataset, TrainConfig};
use super::objective::{evaluate, objective, Stage};
use super::optim::{adam_step, clip_grad_norm, AdamState};

/// Metrics of one epoch. Losses are per-utterance means.
#[derive(Clone, Debug, PartialEq)]
pub struct EpochMetrics {
    pub stage: Stage,
    pub epoch: usize,
    pub steps: u64,
    pub lr: f64,
    pub train_loss: f64,
    pub valid_loss: Option<f64>,
    /// Mean gradient norm before clipping.
    pub grad_norm: f64,
}

pub const METRICS_HEADER: &str = "stage,epoch,steps,lr,train_loss,valid_loss,grad_norm";

impl EpochMetrics {
    pub fn csv_row(&self) -> String {
        let valid = self.valid_loss.map_or(String::new(), |v| format!("{v:.10}"));
        format!(
            "{},{},{},{:.6e},{:.10},{},{:.6}",
            self.stage.name(),
            self.epoch,
            self.steps,
            self.lr,
            self.train_loss,
            valid,
            self.grad_norm
        )
    }
}

/// Trains `model` for one stage in memory. `on_epoch` sees the model after
/// every epoch.
pub fn train(
    cfg: &TrainConfig,
    stage: Stage,
    data: &Dataset,
    mut model: TransducerModel,
    mut on_epoch: impl FnMut(&TransducerModel, &EpochMetrics) -> Result<()>,
) -> Result<(TransducerModel, Vec<EpochMetrics>)> {
    cfg.validate()?;
    if data.train.is_empty() {
        return Err(Error::Input("empty training set".into()));
    }
    let stage_tag = Stage::ALL.iter().position(|&s| s == stage).expect("known stage") as u64;
    let mut rng = ChaCha8Rng::seed_from_u64(cfg.seed.wrapping_mul(0x9E37_79B9_7F4A_7C15) ^ stage_tag);
    let mut order: Vec<usize> = (0..data.train.len()).collect();
    let mut adam = AdamState::default();
    let mut history = Vec::with_capacity(cfg.epochs);
    for epoch in 0..cfg.epochs {
        order.shuffle(&mut rng);
        let (mut loss_sum, mut norm_sum, mut batches, mut lr) = (0.0, 0.0, 0usize, 0.0);
        for batch in order.chunks(cfg.batch_size) {
            let mut total: ParamGrads = ParamGrads::new();
            for &i in batch {
                let u = &data.train[i];
                let (loss, grads) = objective(&model, stage, &u.features, &u.labels, cfg.dropout, rng.next_u64())?;
                loss_sum += loss;
                for (name, g) in grads {
                    match total.get_mut(&name) {
                        Some(acc) => acc.data_mut().iter_mut().zip(g.data()).for_each(|(a, b)| *a += b),
                        None => {
                            total.insert(name, g);
                        }
                    }
                }
            }
            let scale = 1.0 / batch.len() as f64;
            total.values_mut().for_each(|g: &mut Tensor| g.data_mut().iter_mut().for_each(|x| *x *= scale));
            let norm = clip_grad_norm(&mut total, cfg.clip_norm);
            if !norm.is_finite() {
                return Err(Error::numeric("train", format!("gradient norm {norm} in epoch {epoch}")));
            }
            norm_sum += norm;
            batches += 1;
            lr = cfg.schedule.lr(adam.t + 1, epoch);
            adam_step(&mut model.params, &total, &mut adam, lr, &cfg.adam)?;
        }
        let valid_loss = if data.valid.is_empty() {
            None
        } else {
            let sum = data
                .valid
                .iter()
                .map(|u| evaluate(&model, stage, &u.features, &u.labels))
                .sum::<Result<f64>>()?;
            Some(sum / data.valid.len() as f64)
        };
        let m = EpochMetrics {
            stage,
            epoch: epoch + 1,
            steps: adam.t,
            lr,
            train_loss: loss_sum / data.train.len() as f64,
            valid_loss,
            grad_norm: norm_sum / batches as f64,
        };
        on_epoch(&model, &m)?;
        history.push(m);
    }
    Ok((model, history))
}

/// Fresh model for a config.
pub fn fresh_model(cfg: &TrainConfig, data: &Dataset) -> Result<TransducerModel> {
    TransducerModel::new(cfg.model.clone(), data.task.vocab().clone(), cfg.seed)
}

/// `encoder.*` from the CTC-pretrained model, `predictor.*` from the
/// CE-pretrained one, everything else from `base`.
pub fn combine_pretrained(base: &TransducerModel, ctc: &TransducerModel, ce: &TransducerModel) -> Result<TransducerModel> {
    let mut model = base.clone();
    model.params.overwrite_from(&ctc.params.subset("encoder."))?;
    model.params.overwrite_from(&ce.params.subset("predictor."))?;
    Ok(model)
}

/// Paths inside a run directory.
#[derive(Clone, Debug)]
pub struct RunDir {
    pub root: PathBuf,
}

impl RunDir {
    pub fn new(root: impl Into<PathBuf>) -> Self {
        Self { root: root.into() }
    }

    pub fn config(&self) -> PathBuf {
        self.root.join("config.txt")
    }

    pub fn metrics(&self) -> PathBuf {
        self.root.join("metrics.csv")
    }

    pub fn stage_dir(&self, stage: Stage) -> PathBuf {
        self.root.join("checkpoints").join(stage.name())
    }

    pub fn final_checkpoint(&self, stage: Stage) -> PathBuf {
        self.stage_dir(stage).join("final")
    }

    pub fn epoch_checkpoint(&self, stage: Stage, epoch: usize) -> PathBuf {
        self.stage_dir(stage).join(format!("epoch-{epoch:03}"))
    }
}

fn create_dir(path: &Path) -> Result<()> {
    fs::create_dir_all(path).map_err(|e| Error::io(path, e))
}

fn write_file(path: &Path, text: &str) -> Result<()> {
    fs::write(path, text).map_err(|e| Error::io(path, e))
}

/// Starting point of a stage in a run directory. Fine-tuning requires both
/// pretraining stages unless `from_scratch`.
pub fn initial_model(cfg: &TrainConfig, data: &Dataset, run: &RunDir, stage: Stage, from_scratch: bool) -> Result<TransducerModel> {
    let mut model = fresh_model(cfg, data)?;
    if stage != Stage::RnntFinetune || from_scratch {
        return Ok(model);
    }
    let missing: Vec<&str> = [Stage::CtcPretrain, Stage::CePretrain]
        .into_iter()
        .filter(|&s| !run.final_checkpoint(s).join("manifest.txt").is_file())
        .map(Stage::name)
        .collect();
    if !missing.is_empty() {
        return Err(Error::Staging(format!(
            "rnnt-finetune needs finished {} stage(s) in {} (or --from-scratch)",
            missing.join(" and "),
            run.root.display()
        )));
    }
    load_partial(&mut model, &run.final_checkpoint(Stage::CtcPretrain), "encoder.")?;
    load_partial(&mut model, &run.final_checkpoint(Stage::CePretrain), "predictor.")?;
    Ok(model)
}

/// Runs one stage with all run-directory artifacts. Returns the trained
/// model and its epoch metrics.
pub fn run_stage(
    cfg: &TrainConfig,
    data: &Dataset,
    run: &RunDir,
    stage: Stage,
    from_scratch: bool,
    mut log: impl FnMut(&EpochMetrics),
) -> Result<(TransducerModel, Vec<EpochMetrics>)> {
    cfg.validate()?;
    let init = initial_model(cfg, data, run, stage, from_scratch)?;
    let stage_dir = run.stage_dir(stage);
    if stage_dir.exists() {
        fs::remove_dir_all(&stage_dir).map_err(|e| Error::io(&stage_dir, e))?;
    }
    create_dir(&stage_dir)?;
    let text = cfg.to_toml();
    write_file(&run.config(), &text)?;
    write_file(&stage_dir.join("train.toml"), &text)?;

    let metrics_path = run.metrics();
    let fresh = !metrics_path.exists();
    let mut metrics = fs::OpenOptions::new()
        .create(true)
        .append(true)
        .open(&metrics_path)
        .map_err(|e| Error::io(&metrics_path, e))?;
    if fresh {
        writeln!(metrics, "{METRICS_HEADER}").map_err(|e| Error::io(&metrics_path, e))?;
    }

    let (model, history) = train(cfg, stage, data, init, |model, m| {
        writeln!(metrics, "{}", m.csv_row()).map_err(|e| Error::io(&metrics_path, e))?;
        if cfg.keep_checkpoints > 0 {
            save_checkpoint(model, &run.epoch_checkpoint(stage, m.epoch))?;
        }
        if cfg.keep_checkpoints > 0 && m.epoch > cfg.keep_checkpoints {
            let old = run.epoch_checkpoint(stage, m.epoch - cfg.keep_checkpoints);
            fs::remove_dir_all(&old).map_err(|e| Error::io(&old, e))?;
        }
        log(m);
        Ok(())
    })?;
    save_checkpoint_as(&model, &run.final_checkpoint(stage), Dtype::F64)?;
    Ok((model, history))
}

/// Loads the final model of a stage.
pub fn load_stage(run: &RunDir, stage: Stage) -> Result<TransducerModel> {
    load_checkpoint(&run.final_checkpoint(stage))
}
