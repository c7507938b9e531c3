//! Streaming recognition of three seconds of input: audio arrives in
//! 10 ms chunks, features come out of the online frontend, and the session
//! emits symbols as soon as they are final. Models trained on template
//! features get template frames pushed directly instead.
//!
//! cargo run --release --example streaming -- [CHECKPOINT]

use std::path::PathBuf;

use msa_transducer::decoding::{BeamConfig, DEFAULT_MAX_SYMBOLS};
use msa_transducer::features::{FeatureConfig, OnlineFrontend, SynthConfig, SynthTask};
use msa_transducer::streaming::{SearchMode, StreamSession};
use msa_transducer::train::VALID_SEED_BASE;
use msa_transducer::transducer::load_checkpoint;

const SECONDS: usize = 3;

fn main() -> msa_transducer::Result<()> {
    let path = std::env::args()
        .nth(1)
        .map(PathBuf::from)
        .unwrap_or_else(|| PathBuf::from("target/msa-run/checkpoints/rnnt-finetune/final"));
    let model = load_checkpoint(&path)?;
    let task = SynthTask::new(SynthConfig::default())?;
    let fcfg = FeatureConfig::desk();
    let audio = model.config.d_in == fcfg.dim();
    if let Some(n) = model.encoder_lookahead() {
        println!("encoder lookahead: {n} feature frames");
    }

    // consecutive held-out utterances, cut to three seconds
    let (mut pcm, mut frames, mut reference) = (Vec::new(), Vec::new(), Vec::new());
    let mut seed = VALID_SEED_BASE;
    while pcm.len() < SECONDS * 16_000 && frames.len() < SECONDS * 100 {
        if audio {
            let (p, labels) = task.audio(seed);
            pcm.extend(p);
            reference.push(task.vocab().decode(&labels));
        } else {
            let u = task.utterance(seed);
            frames.extend(u.features.rows().map(<[f64]>::to_vec));
            reference.push(task.vocab().decode(&u.labels));
        }
        seed += 1;
    }
    pcm.truncate(SECONDS * 16_000);
    frames.truncate(SECONDS * 100);
    println!("reference (last one cut): {}", reference.join(" | "));

    for (name, mode) in [
        ("greedy", SearchMode::Greedy { max_symbols: DEFAULT_MAX_SYMBOLS }),
        ("beam 4", SearchMode::Beam(BeamConfig::new(4))),
    ] {
        let mut session = StreamSession::new(&model, mode, None)?;
        let mut partial = String::new();
        let show = |at: String, symbols: &[usize], partial: &mut String| {
            partial.push_str(&model.vocab.decode(symbols));
            println!("  {at}: {partial}");
        };
        if audio {
            let mut frontend = OnlineFrontend::new(&fcfg)?;
            for (i, chunk) in pcm.chunks(160).enumerate() {
                for row in frontend.push(chunk)? {
                    for e in session.push(&row)? {
                        show(format!("{:>5} ms", (i + 1) * 10), &e.symbols, &mut partial);
                    }
                }
            }
            for row in frontend.flush()? {
                for e in session.push(&row)? {
                    show("  flush ".into(), &e.symbols, &mut partial);
                }
            }
        } else {
            for (i, row) in frames.iter().enumerate() {
                for e in session.push(row)? {
                    show(format!("frame {i:>3}"), &e.symbols, &mut partial);
                }
            }
        }
        let before_end = session.transcript().len();
        for e in session.flush()? {
            show("  flush ".into(), &e.symbols, &mut partial);
        }
        println!(
            "[{name}] {before_end} of {} symbols emitted before end of input; decoder state {} numbers",
            session.transcript().len(),
            session.state_len()
        );
    }
    Ok(())
}
