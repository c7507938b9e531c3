//! The synthetic transduction task: letter templates plus noise, with
//! word separators rendered as silence.

use msa_transducer::features::{SynthConfig, SynthTask};

fn main() -> msa_transducer::Result<()> {
    let task = SynthTask::new(SynthConfig::default())?;
    for seed in 0..5 {
        let u = task.utterance(seed);
        let spans: Vec<String> = u.spans.iter().map(|(a, b)| format!("{a}..{b}")).collect();
        println!("{:>10}  {:>3} frames  spans {}", task.vocab().decode(&u.labels), u.features.shape()[0], spans.join(" "));
    }
    let (a, b) = task.chord(task.vocab().id("A").unwrap());
    println!("audio rendering: 'A' is a {a:.0} Hz + {b:.0} Hz chord");
    Ok(())
}
