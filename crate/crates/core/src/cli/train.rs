use std::io::Write;
use std::path::Path;
use std::time::Instant;

use clap::ValueEnum;

use crate::error::{Error, Result};
use crate::layers::BlockKind;
use crate::train::{run_stage, Dataset, EpochMetrics, RunDir, Stage, TrainConfig};

use super::{report, TrainArgs};

/// Built-in training configs.
#[derive(Clone, Copy, Debug, PartialEq, Eq, ValueEnum)]
pub enum Preset {
    /// Template features, d=32 memory-attention transducer.
    Desk,
    /// Audio rendering through the 24-dim desk frontend.
    Audio,
    /// Encoder comparison task with a memory-attention encoder.
    CompareMemory,
    /// Encoder comparison task with a restricted-attention encoder.
    CompareRestricted,
    /// Encoder comparison task with an LSTM encoder.
    CompareLstm,
}

impl Preset {
    pub fn config(self) -> TrainConfig {
        match self {
            Preset::Desk => TrainConfig::default(),
            Preset::Audio => TrainConfig::audio(),
            Preset::CompareMemory => TrainConfig::context_comparison(BlockKind::Msa, 0),
            Preset::CompareRestricted => TrainConfig::context_comparison(BlockKind::RestrictedSa, 0),
            Preset::CompareLstm => TrainConfig::context_comparison(BlockKind::Lstm, 0),
        }
    }
}

pub(crate) fn load_config(path: Option<&Path>, preset: Preset) -> Result<TrainConfig> {
    match path {
        Some(p) => TrainConfig::from_toml(&std::fs::read_to_string(p).map_err(|e| Error::io(p, e))?),
        None => Ok(preset.config()),
    }
}

/// `train`: one stage into a run directory; returns the epoch metrics.
pub fn cmd_train(args: &TrainArgs, out: &mut dyn Write) -> Result<Vec<EpochMetrics>> {
    let stage = Stage::parse(&args.stage)?;
    let mut cfg = load_config(args.config.as_deref(), args.preset)?;
    if let Some(e) = args.epochs {
        cfg.epochs = e;
    }
    if let Some(s) = args.seed {
        cfg.seed = s;
    }
    if let Some(n) = args.train_size {
        cfg.data.n_train = n;
    }
    cfg.validate()?;
    let start = Instant::now();
    let data = Dataset::build(&cfg.data)?;
    report(out, format!("{}: {} training / {} held-out utterances", stage.name(), data.train.len(), data.valid.len()))?;
    report(out, crate::train::METRICS_HEADER)?;
    let (_, history) = run_stage(&cfg, &data, &RunDir::new(&args.run_dir), stage, args.from_scratch, |m| {
        let _ = writeln!(out, "{}  ({:.1}s)", m.csv_row(), start.elapsed().as_secs_f64());
    })?;
    report(out, format!("final checkpoint: {}", RunDir::new(&args.run_dir).final_checkpoint(stage).display()))?;
    Ok(history)
}
