//! Whole-utterance recognition with a trained model, and corpus scoring.

use crate::decoding::{ctc_beam_search, ctc_greedy, BeamConfig, BeamSearch, ErrorCounts, GreedySearch, NGramLm};
use crate::error::{Error, Result};
use crate::numcore::Tensor;
use crate::streaming::TransducerScorer;
use crate::transducer::{TransducerModel, Vocabulary};

/// Which head and search to decode with.
#[derive(Clone, Debug, PartialEq)]
pub enum DecodeMode {
    CtcGreedy,
    CtcBeam { beam: usize, lm_weight: f64 },
    RnntGreedy { max_symbols: usize },
    RnntBeam(BeamConfig),
}

impl DecodeMode {
    /// `ctc` or `rnnt` with a beam width; beam 1 is greedy.
    pub fn from_args(mode: &str, beam: usize, lm_weight: f64) -> Result<Self> {
        if beam == 0 {
            return Err(Error::Usage("beam width must be at least 1".into()));
        }
        match (mode, beam) {
            ("ctc", 1) => Ok(DecodeMode::CtcGreedy),
            ("ctc", _) => Ok(DecodeMode::CtcBeam { beam, lm_weight }),
            ("rnnt", 1) => Ok(DecodeMode::RnntGreedy { max_symbols: crate::decoding::DEFAULT_MAX_SYMBOLS }),
            ("rnnt", _) => Ok(DecodeMode::RnntBeam(BeamConfig { lm_weight, ..BeamConfig::new(beam) })),
            (other, _) => Err(Error::Usage(format!("unknown decode mode {other:?} (expected ctc or rnnt)"))),
        }
    }
}

/// Best label sequence for one utterance.
pub fn transcribe(model: &TransducerModel, features: &Tensor, mode: &DecodeMode, lm: Option<&NGramLm>) -> Result<Vec<usize>> {
    if let Some(lm) = lm {
        lm.check_vocabulary(&model.vocab)?;
    }
    let e = model.encode_tensor(features)?;
    match mode {
        DecodeMode::CtcGreedy => Ok(ctc_greedy(&model.ctc_tensor(&e)?, Vocabulary::BLANK)),
        DecodeMode::CtcBeam { beam, lm_weight } => {
            let hyps = ctc_beam_search(&model.ctc_tensor(&e)?, Vocabulary::BLANK, *beam, *lm_weight, lm)?;
            Ok(hyps.into_iter().next().map(|h| h.labels).unwrap_or_default())
        }
        DecodeMode::RnntGreedy { max_symbols } => {
            let scorer = TransducerScorer::new(model)?;
            let frames: Vec<Vec<f64>> = e.rows().map(|r| scorer.project(r)).collect();
            GreedySearch::decode(&scorer, frames.iter().map(Vec::as_slice), *max_symbols)
        }
        DecodeMode::RnntBeam(cfg) => {
            let scorer = TransducerScorer::new(model)?;
            let frames: Vec<Vec<f64>> = e.rows().map(|r| scorer.project(r)).collect();
            let hyps = BeamSearch::decode(&scorer, frames.iter().map(Vec::as_slice), cfg.clone(), lm)?;
            Ok(hyps.into_iter().next().map(|h| h.labels).unwrap_or_default())
        }
    }
}

/// Corpus-level error rates.
#[derive(Clone, Debug, PartialEq)]
pub struct ScoreReport {
    pub counts: ErrorCounts,
    pub cer: f64,
    pub wer: f64,
    /// Fraction of utterances recognized exactly.
    pub sequence_accuracy: f64,
    pub hypotheses: Vec<Vec<usize>>,
}

/// Decodes every `(features, labels)` pair and scores against the labels.
pub fn score<'a>(
    model: &TransducerModel,
    data: impl IntoIterator<Item = (&'a Tensor, &'a [usize])>,
    mode: &DecodeMode,
    lm: Option<&NGramLm>,
) -> Result<ScoreReport> {
    let mut counts = ErrorCounts::default();
    let mut exact = 0;
    let mut hypotheses = Vec::new();
    for (features, labels) in data {
        let hyp = transcribe(model, features, mode, lm)?;
        counts.add(ErrorCounts::of(&model.vocab.decode(&hyp), &model.vocab.decode(labels)));
        exact += usize::from(hyp == labels);
        hypotheses.push(hyp);
    }
    if hypotheses.is_empty() {
        return Err(Error::Input("nothing to score".into()));
    }
    let (cer, wer) = counts.rates()?;
    Ok(ScoreReport { counts, cer, wer, sequence_accuracy: exact as f64 / hypotheses.len() as f64, hypotheses })
}
