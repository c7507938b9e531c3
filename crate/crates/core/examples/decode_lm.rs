//! Decoding a trained checkpoint on held-out data with every search:
//! CTC greedy and prefix beam search, RNN-T greedy and beam search, the
//! beam searches with and without a character trigram LM.
//!
//! cargo run --release --example decode_lm -- [CHECKPOINT]
//!
//! The default checkpoint is the one `train_staged` writes.

use std::path::PathBuf;

use msa_transducer::decoding::{NGramLm, DEFAULT_LM_WEIGHT};
use msa_transducer::eval::{score, DecodeMode};
use msa_transducer::train::{DataConfig, Dataset, TrainConfig};
use msa_transducer::transducer::load_checkpoint;

fn main() -> msa_transducer::Result<()> {
    let path = std::env::args()
        .nth(1)
        .map(PathBuf::from)
        .unwrap_or_else(|| PathBuf::from("target/msa-run/checkpoints/rnnt-finetune/final"));
    let model = load_checkpoint(&path)?;
    let mut cfg = if model.config.d_in == TrainConfig::audio().model.d_in { TrainConfig::audio() } else { TrainConfig::default() };
    cfg.data = DataConfig { n_train: 2000, n_valid: 100, ..cfg.data };
    let data = Dataset::build(&cfg.data)?;
    let text: Vec<Vec<usize>> = data.train.iter().map(|u| u.labels.clone()).collect();
    let lm = NGramLm::train(&text, &model.vocab, 3, 0.1)?;
    println!("trigram LM from {} training transcripts", text.len());

    let pairs = || data.valid.iter().map(|u| (&u.features, u.labels.as_slice()));
    for (name, mode, with_lm) in [
        ("ctc greedy", DecodeMode::from_args("ctc", 1, 0.0)?, false),
        ("ctc beam 8", DecodeMode::from_args("ctc", 8, 0.0)?, false),
        ("ctc beam 8 + LM", DecodeMode::from_args("ctc", 8, DEFAULT_LM_WEIGHT)?, true),
        ("rnnt greedy", DecodeMode::from_args("rnnt", 1, 0.0)?, false),
        ("rnnt beam 4", DecodeMode::from_args("rnnt", 4, 0.0)?, false),
        ("rnnt beam 4 + LM", DecodeMode::from_args("rnnt", 4, DEFAULT_LM_WEIGHT)?, true),
    ] {
        let r = score(&model, pairs(), &mode, with_lm.then_some(&lm))?;
        println!("{name:>17}: CER {:.4}  WER {:.4}  exact {:.3}", r.cer, r.wer, r.sequence_accuracy);
    }
    Ok(())
}
