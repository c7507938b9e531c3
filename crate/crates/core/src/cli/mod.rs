//! The commands behind the `msa` binary.
//!
//! Every command writes its human-readable report to the given writer and
//! its artifacts under a run directory. Errors map to exit codes 1 (usage
//! or config), 2 (data) and 3 (numeric).

mod bench;
mod data;
mod decode;
mod stream;
mod train;

use std::io::Write;
use std::path::PathBuf;

use clap::{Args, Parser, Subcommand};

use crate::error::{Error, Result};

pub use bench::cmd_bench;
pub use data::{cmd_lm_train, cmd_synth_data, load_data_dir, DataDir, DATA_CONFIG, TRANSCRIPTS};
pub use decode::{cmd_decode, DecodeReport};
pub use stream::{cmd_stream, StreamEvent, StreamReport};
pub use train::{cmd_train, Preset};

#[derive(Debug, Parser)]
#[command(name = "msa", version, about = "Streaming transducer with memory self-attention")]
pub struct Cli {
    #[command(subcommand)]
    pub command: Command,
}

#[derive(Debug, Subcommand)]
pub enum Command {
    /// Run one training stage.
    Train(TrainArgs),
    /// Decode a data directory and score it.
    Decode(DecodeArgs),
    /// Decode a WAV file incrementally.
    Stream(StreamArgs),
    /// Measure compute scaling of the block variants.
    Bench(BenchArgs),
    /// Train a character n-gram language model.
    LmTrain(LmTrainArgs),
    /// Write synthetic utterances to a data directory.
    SynthData(SynthDataArgs),
}

#[derive(Debug, Args)]
pub struct TrainArgs {
    /// ctc-pretrain, ce-pretrain or rnnt-finetune.
    #[arg(long)]
    pub stage: String,
    #[arg(long)]
    pub run_dir: PathBuf,
    /// TOML training config; defaults to the preset.
    #[arg(long)]
    pub config: Option<PathBuf>,
    #[arg(long, value_enum, default_value_t = Preset::Desk)]
    pub preset: Preset,
    #[arg(long)]
    pub epochs: Option<usize>,
    #[arg(long)]
    pub seed: Option<u64>,
    #[arg(long)]
    pub train_size: Option<usize>,
    /// Fine-tune without the pretraining checkpoints.
    #[arg(long)]
    pub from_scratch: bool,
}

#[derive(Debug, Args)]
pub struct DecodeArgs {
    /// Checkpoint directory.
    #[arg(long)]
    pub checkpoint: PathBuf,
    /// Data directory (feature dumps or WAV files plus transcripts).
    #[arg(long)]
    pub data: PathBuf,
    #[arg(long)]
    pub run_dir: PathBuf,
    /// ctc or rnnt.
    #[arg(long, default_value = "rnnt")]
    pub mode: String,
    #[arg(long, default_value_t = 1)]
    pub beam: usize,
    #[arg(long)]
    pub lm: Option<PathBuf>,
    /// Shallow-fusion weight.
    #[arg(long, default_value_t = crate::decoding::DEFAULT_LM_WEIGHT)]
    pub lambda: f64,
}

#[derive(Debug, Args)]
pub struct StreamArgs {
    #[arg(long)]
    pub checkpoint: PathBuf,
    #[arg(long)]
    pub wav: PathBuf,
    /// Frontend config (TOML); defaults to the desk frontend.
    #[arg(long)]
    pub features: Option<PathBuf>,
    #[arg(long, default_value_t = 1)]
    pub beam: usize,
    #[arg(long)]
    pub lm: Option<PathBuf>,
    #[arg(long, default_value_t = crate::decoding::DEFAULT_LM_WEIGHT)]
    pub lambda: f64,
    /// Audio delivered per push, in milliseconds.
    #[arg(long, default_value_t = 10.0)]
    pub chunk_ms: f64,
}

#[derive(Debug, Args)]
pub struct BenchArgs {
    /// Comma-separated variant names, or `all`.
    #[arg(long, default_value = "all")]
    pub variants: String,
    /// Comma-separated sequence lengths.
    #[arg(long, default_value = "256,512,1024")]
    pub lengths: String,
    #[arg(long)]
    pub run_dir: PathBuf,
    #[arg(long, default_value_t = 4)]
    pub d_model: usize,
    #[arg(long, default_value_t = 2)]
    pub layers: usize,
    #[arg(long, default_value_t = 16)]
    pub left: usize,
    #[arg(long, default_value_t = 4)]
    pub right: usize,
    #[arg(long, default_value_t = 0)]
    pub seed: u64,
}

#[derive(Debug, Args)]
pub struct LmTrainArgs {
    /// One transcript per line (`id<TAB>text` lines are accepted).
    #[arg(long)]
    pub text: PathBuf,
    #[arg(long)]
    pub out: PathBuf,
    #[arg(long, default_value_t = 3)]
    pub order: usize,
    /// Add-k smoothing constant.
    #[arg(long, default_value_t = 0.1)]
    pub k: f64,
}

#[derive(Debug, Args)]
pub struct SynthDataArgs {
    #[arg(long)]
    pub out: PathBuf,
    #[arg(long, default_value_t = 100)]
    pub count: usize,
    /// First utterance seed; defaults to the held-out range.
    #[arg(long)]
    pub first_seed: Option<u64>,
    /// Render audio: writes WAV files and features computed from them.
    #[arg(long)]
    pub audio: bool,
    /// Training config whose data section to use; defaults to the preset.
    #[arg(long)]
    pub config: Option<PathBuf>,
    #[arg(long, value_enum, default_value_t = Preset::Desk)]
    pub preset: Preset,
    #[arg(long)]
    pub min_len: Option<usize>,
    #[arg(long)]
    pub max_len: Option<usize>,
}

/// Runs a parsed command.
pub fn run(cli: Cli, out: &mut dyn Write) -> Result<()> {
    match cli.command {
        Command::Train(a) => cmd_train(&a, out).map(drop),
        Command::Decode(a) => cmd_decode(&a, out).map(drop),
        Command::Stream(a) => cmd_stream(&a, out).map(drop),
        Command::Bench(a) => cmd_bench(&a, out).map(drop),
        Command::LmTrain(a) => cmd_lm_train(&a, out),
        Command::SynthData(a) => cmd_synth_data(&a, out).map(drop),
    }
}

/// Parses `args` (program name first), runs, and returns the exit code.
pub fn main_with<I, T>(args: I, out: &mut dyn Write, err: &mut dyn Write) -> i32
where
    I: IntoIterator<Item = T>,
    T: Into<std::ffi::OsString> + Clone,
{
    let cli = match Cli::try_parse_from(args) {
        Ok(cli) => cli,
        Err(e) => {
            if e.use_stderr() {
                let _ = write!(err, "{e}");
                return 1;
            }
            let _ = write!(out, "{e}");
            return 0;
        }
    };
    match run(cli, out) {
        Ok(()) => 0,
        Err(e) => {
            let _ = writeln!(err, "error: {e}");
            e.exit_code()
        }
    }
}

pub(crate) fn report(out: &mut dyn Write, text: impl std::fmt::Display) -> Result<()> {
    writeln!(out, "{text}").map_err(|e| Error::io("<output>", e))
}

pub(crate) fn parse_list<T: std::str::FromStr>(what: &str, s: &str) -> Result<Vec<T>> {
    s.split(',')
        .filter(|p| !p.trim().is_empty())
        .map(|p| p.trim().parse().map_err(|_| Error::Usage(format!("{what}: cannot parse {p:?}"))))
        .collect()
}
