//! Greedy and beam search for RNN-T and CTC, count-based n-gram shallow
//! fusion, and error-rate scoring.

mod ctc;
mod lm;
mod metrics;
mod rnnt;

pub use ctc::{ctc_beam_search, ctc_greedy, CtcHypothesis};
pub use lm::NGramLm;
pub use metrics::{edit_distance, score_cer_wer, ErrorCounts};
pub use rnnt::{BeamConfig, BeamSearch, GreedySearch, Hypothesis, LabelScorer, DEFAULT_LM_WEIGHT, DEFAULT_MAX_SYMBOLS};

use std::cmp::Ordering;

/// Search order: higher score first, then lexicographically smaller prefix.
pub(crate) fn rank(score_a: f64, prefix_a: &[usize], score_b: f64, prefix_b: &[usize]) -> Ordering {
    score_b.total_cmp(&score_a).then_with(|| prefix_a.cmp(prefix_b))
}
