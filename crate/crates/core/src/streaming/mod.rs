//! Frame-by-frame inference.
//!
//! Every layer runs as a [`Stage`] that keeps only the state its future
//! outputs need: conv layers keep the frames under the kernel, attention
//! blocks a ring of `l + r + 1` keys and values plus the memory LSTM
//! carry. A [`StreamSession`] chains the encoder stages, the joint network
//! and a decoder, and reproduces the offline forward pass exactly.

mod bench;
mod predictor;
mod session;
mod stage;

pub use bench::{
    fit_r2, measure_scaling, per_frame_macs, reception_probe, scaling_csv, BenchConfig, ScalingRow, Variant,
    PROBE_THRESHOLD,
};
pub use predictor::{encoder_stack, predictor_stack, PredictorState, TransducerScorer};
pub use session::{Emission, SearchMode, StreamSession};
pub use stage::{run_to_end, AttentionStream, ConvStream, Stage, StageStack};

/// Multiply-accumulate counts per stage, read from the kernel counter.
#[derive(Clone, Debug, Default, PartialEq, Eq)]
pub struct OpCounter {
    names: Vec<String>,
    /// Counts of the most recent push or flush, per stage.
    last: Vec<u64>,
    totals: Vec<u64>,
}

impl OpCounter {
    pub fn new() -> Self {
        Self::default()
    }

    pub(crate) fn record(&mut self, names: &[String], spent: &[u64]) {
        if self.names.is_empty() {
            self.names = names.to_vec();
            self.totals = vec![0; names.len()];
        }
        debug_assert_eq!(self.names, names);
        for (t, s) in self.totals.iter_mut().zip(spent) {
            *t += s;
        }
        self.last = spent.to_vec();
    }

    pub fn names(&self) -> &[String] {
        &self.names
    }

    pub fn last(&self) -> &[u64] {
        &self.last
    }

    pub fn totals(&self) -> &[u64] {
        &self.totals
    }

    pub fn last_total(&self) -> u64 {
        self.last.iter().sum()
    }

    pub fn total(&self) -> u64 {
        self.totals.iter().sum()
    }
}
