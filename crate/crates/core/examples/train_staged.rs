//! Staged training into a run directory: CTC pretraining of the encoder,
//! next-symbol pretraining of the prediction network, then RNN-T
//! fine-tuning from both, followed by held-out scoring.
//!
//! cargo run --release --example train_staged -- [RUN_DIR] [--audio]
//!
//! Takes about 4 minutes (template features) or 10 minutes (audio) on one
//! core. `decode_lm` and `streaming` read the result.

use msa_transducer::eval::{score, DecodeMode};
use msa_transducer::train::{run_stage, Dataset, RunDir, Stage, TrainConfig};

fn main() -> msa_transducer::Result<()> {
    let args: Vec<String> = std::env::args().skip(1).collect();
    let audio = args.iter().any(|a| a == "--audio");
    let dir = args.iter().find(|a| !a.starts_with("--")).cloned().unwrap_or_else(|| "target/msa-run".into());
    let base = if audio { TrainConfig::audio() } else { TrainConfig::default() };
    let data = Dataset::build(&base.data)?;
    let run = RunDir::new(&dir);
    println!("{} training / {} held-out utterances -> {dir}", data.train.len(), data.valid.len());

    let mut model = None;
    for (stage, epochs) in [(Stage::CtcPretrain, 8), (Stage::CePretrain, 3), (Stage::RnntFinetune, 9)] {
        let cfg = TrainConfig { epochs, ..base.clone() };
        let (m, _) = run_stage(&cfg, &data, &run, stage, false, |m| println!("{}", m.csv_row()))?;
        model = Some(m);
    }
    let model = model.expect("three stages ran");

    let pairs = || data.valid.iter().map(|u| (&u.features, u.labels.as_slice()));
    for mode in [DecodeMode::CtcGreedy, DecodeMode::from_args("rnnt", 1, 0.0)?] {
        let r = score(&model, pairs(), &mode, None)?;
        println!("{mode:?}: CER {:.4}  WER {:.4}  exact {:.3}", r.cer, r.wer, r.sequence_accuracy);
    }
    println!("final checkpoint: {}", run.final_checkpoint(Stage::RnntFinetune).display());
    Ok(())
}
