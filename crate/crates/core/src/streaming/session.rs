use crate::decoding::{BeamConfig, BeamSearch, GreedySearch, NGramLm};
use crate::error::{Error, Result};
use crate::numcore::kernels;
use crate::transducer::TransducerModel;

use super::predictor::{encoder_stack, PredictorState, TransducerScorer};
use super::stage::StageStack;
use super::OpCounter;

#[derive(Clone, Debug, PartialEq)]
pub enum SearchMode {
    Greedy { max_symbols: usize },
    Beam(BeamConfig),
}

/// Symbols that became final at encoder frame `frame`.
#[derive(Clone, Debug, PartialEq, Eq)]
pub struct Emission {
    pub frame: usize,
    pub symbols: Vec<usize>,
}

enum Search<'m> {
    Greedy(GreedySearch<PredictorState<'m>>),
    Beam(BeamSearch<'m, PredictorState<'m>>),
}

/// One utterance being decoded as its feature frames arrive.
///
/// Greedy search emits symbols as soon as they are chosen. Beam search
/// emits the prefix shared by every live hypothesis, and the rest of the
/// best one at [`flush`](Self::flush).
pub struct StreamSession<'m> {
    scorer: TransducerScorer<'m>,
    encoder: StageStack<'m>,
    search: Search<'m>,
    d_in: usize,
    pushed: usize,
    encoded: usize,
    emitted: Vec<usize>,
    closed: bool,
    ops: OpCounter,
    decoder_macs: u64,
}

impl<'m> StreamSession<'m> {
    pub fn new(model: &'m TransducerModel, mode: SearchMode, lm: Option<&'m NGramLm>) -> Result<Self> {
        let scorer = TransducerScorer::new(model)?;
        if let Some(lm) = lm {
            lm.check_vocabulary(&model.vocab)?;
        }
        let search = match mode {
            SearchMode::Greedy { max_symbols } => Search::Greedy(GreedySearch::new(&scorer, max_symbols)?),
            SearchMode::Beam(cfg) => Search::Beam(BeamSearch::new(&scorer, cfg, lm)?),
        };
        Ok(Self {
            encoder: encoder_stack(model)?,
            scorer,
            search,
            d_in: model.config.d_in,
            pushed: 0,
            encoded: 0,
            emitted: Vec::new(),
            closed: false,
            ops: OpCounter::new(),
            decoder_macs: 0,
        })
    }

    /// Feeds one feature frame.
    pub fn push(&mut self, frame: &[f64]) -> Result<Vec<Emission>> {
        if self.closed {
            return Err(Error::State("push after the stream was flushed".into()));
        }
        if frame.len() != self.d_in {
            return Err(Error::dim("stream push", format!("frame of width {}, expected {}", frame.len(), self.d_in)));
        }
        if let Some(bad) = frame.iter().find(|v| !v.is_finite()) {
            return Err(Error::numeric("stream push", format!("non-finite feature value {bad}")));
        }
        self.pushed += 1;
        let rows = self.encoder.push(frame.to_vec(), Some(&mut self.ops));
        self.decode(rows, false)
    }

    /// Ends the stream: drains the lookahead with edge replication,
    /// decodes the remaining frames and closes the session.
    pub fn flush(&mut self) -> Result<Vec<Emission>> {
        if self.closed {
            return Err(Error::State("stream already flushed".into()));
        }
        self.closed = true;
        let rows = self.encoder.flush(Some(&mut self.ops));
        self.decode(rows, true)
    }

    fn decode(&mut self, rows: Vec<Vec<f64>>, last: bool) -> Result<Vec<Emission>> {
        let before = kernels::mac_count();
        let mut out = Vec::new();
        for row in rows {
            let frame = self.encoded;
            self.encoded += 1;
            let pe = self.scorer.project(&row);
            let symbols = match &mut self.search {
                Search::Greedy(g) => g.advance(&self.scorer, &pe)?,
                Search::Beam(b) => {
                    b.advance(&self.scorer, &pe)?;
                    let stable = common_prefix(b.hypotheses().iter().map(|h| h.labels.as_slice()));
                    stable[self.emitted.len()..].to_vec()
                }
            };
            self.note(&mut out, frame, symbols);
        }
        if last {
            if let Search::Beam(b) = &self.search {
                let best = b.hypotheses().first().map(|h| h.labels.clone()).unwrap_or_default();
                let rest = best.get(self.emitted.len()..).unwrap_or_default().to_vec();
                self.note(&mut out, self.encoded.saturating_sub(1), rest);
            }
        }
        self.decoder_macs += kernels::mac_count() - before;
        Ok(out)
    }

    fn note(&mut self, out: &mut Vec<Emission>, frame: usize, symbols: Vec<usize>) {
        if !symbols.is_empty() {
            self.emitted.extend_from_slice(&symbols);
            out.push(Emission { frame, symbols });
        }
    }

    /// Symbols emitted so far.
    pub fn transcript(&self) -> &[usize] {
        &self.emitted
    }

    pub fn frames_pushed(&self) -> usize {
        self.pushed
    }

    pub fn frames_encoded(&self) -> usize {
        self.encoded
    }

    pub fn is_closed(&self) -> bool {
        self.closed
    }

    /// Encoder MAC counts per stage.
    pub fn ops(&self) -> &OpCounter {
        &self.ops
    }

    /// MACs spent in the joint network and prediction network.
    pub fn decoder_macs(&self) -> u64 {
        self.decoder_macs
    }

    /// Numeric elements held by the encoder buffers and the decoder's
    /// prediction-network states (emitted symbols are output, not state).
    pub fn state_len(&self) -> usize {
        let decoder = match &self.search {
            Search::Greedy(g) => g.state().state_len(),
            Search::Beam(b) => b.hypotheses().iter().map(|h| h.state.state_len()).sum(),
        };
        self.encoder.state_len() + decoder
    }
}

fn common_prefix<'a>(mut seqs: impl Iterator<Item = &'a [usize]>) -> &'a [usize] {
    let Some(first) = seqs.next() else { return &[] };
    seqs.fold(first, |acc, s| {
        let n = acc.iter().zip(s).take_while(|(a, b)| a == b).count();
        &acc[..n]
    })
}
