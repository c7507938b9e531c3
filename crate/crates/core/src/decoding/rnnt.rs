use std::collections::BTreeMap;

use crate::error::{Error, Result};
use crate::numcore::kernels::log_add;

use super::{rank, NGramLm};

/// Default cap on labels emitted per encoder frame.
pub const DEFAULT_MAX_SYMBOLS: usize = 4;
/// Default shallow-fusion weight.
pub const DEFAULT_LM_WEIGHT: f64 = 0.3;

/// What a transducer decoder needs from a model: a label-side state that
/// can be extended one symbol at a time, and per-frame output
/// distributions. `frame` is the model's per-frame encoder representation.
pub trait LabelScorer {
    type State: Clone;

    fn blank(&self) -> usize;
    fn vocab_size(&self) -> usize;
    /// State after the sentence-start symbol.
    fn start(&self) -> Result<Self::State>;
    fn extend(&self, state: &Self::State, label: usize) -> Result<Self::State>;
    /// Log-probabilities over the vocabulary.
    fn log_probs(&self, frame: &[f64], state: &Self::State) -> Vec<f64>;
}

/// Greedy choice: the most likely symbol, with ties going to blank and
/// then to the lowest index.
fn greedy_choice(lp: &[f64], blank: usize) -> usize {
    let mut best = blank;
    for (k, &v) in lp.iter().enumerate() {
        if v > lp[best] || (v == lp[best] && best != blank && k < best) {
            best = k;
        }
    }
    best
}

/// Frame-synchronous greedy decoding: at each frame, emit the argmax symbol
/// until blank wins or `max_symbols` labels have been emitted.
pub struct GreedySearch<S> {
    pub labels: Vec<usize>,
    state: S,
    max_symbols: usize,
}

impl<S: Clone> GreedySearch<S> {
    pub fn new<M: LabelScorer<State = S>>(model: &M, max_symbols: usize) -> Result<Self> {
        Ok(Self { labels: Vec::new(), state: model.start()?, max_symbols })
    }

    /// Consumes one frame; returns the labels emitted at it.
    pub fn advance<M: LabelScorer<State = S>>(&mut self, model: &M, frame: &[f64]) -> Result<Vec<usize>> {
        let mut emitted = Vec::new();
        while emitted.len() < self.max_symbols {
            let k = greedy_choice(&model.log_probs(frame, &self.state), model.blank());
            if k == model.blank() {
                break;
            }
            self.state = model.extend(&self.state, k)?;
            self.labels.push(k);
            emitted.push(k);
        }
        Ok(emitted)
    }

    /// Label-side state after the labels emitted so far.
    pub fn state(&self) -> &S {
        &self.state
    }

    /// Decodes a whole sequence of frames.
    pub fn decode<'a, M: LabelScorer<State = S>>(
        model: &M,
        frames: impl IntoIterator<Item = &'a [f64]>,
        max_symbols: usize,
    ) -> Result<Vec<usize>> {
        let mut search = Self::new(model, max_symbols)?;
        for f in frames {
            search.advance(model, f)?;
        }
        Ok(search.labels)
    }
}

#[derive(Clone, Debug, PartialEq)]
pub struct BeamConfig {
    pub beam: usize,
    /// Shallow-fusion weight λ; ignored without an LM.
    pub lm_weight: f64,
    pub max_symbols: usize,
    /// Optional cap on the total output length.
    pub max_output_len: Option<usize>,
    /// Rank final hypotheses by score per emitted label.
    pub length_norm: bool,
}

impl BeamConfig {
    pub fn new(beam: usize) -> Self {
        Self { beam, lm_weight: DEFAULT_LM_WEIGHT, max_symbols: DEFAULT_MAX_SYMBOLS, max_output_len: None, length_norm: false }
    }
}

/// A beam entry. `total = model + λ·lm`.
#[derive(Clone, Debug)]
pub struct Hypothesis<S> {
    pub labels: Vec<usize>,
    pub total: f64,
    pub model: f64,
    pub lm: f64,
    pub state: S,
}

/// An expansion of `parent` by blank (`label == None`) or one label.
struct Candidate {
    parent: usize,
    label: Option<usize>,
    labels: Vec<usize>,
    total: f64,
    model: f64,
    lm: f64,
    /// Log-probability of this step; breaks score ties between siblings
    /// the same way greedy search does.
    local: f64,
}

/// Frame-synchronous RNN-T beam search.
///
/// Per frame, hypotheses are expanded depth by depth: each open
/// hypothesis either ends the frame with blank or emits one more label.
/// After each depth the candidates are pruned to the `beam` best; those
/// that ended the frame are merged by prefix (log-sum of model scores).
/// Without pruning this computes, for every prefix, the exact total
/// probability of all alignments that emit at most `max_symbols` labels
/// per frame.
pub struct BeamSearch<'l, S> {
    cfg: BeamConfig,
    lm: Option<&'l NGramLm>,
    hyps: Vec<Hypothesis<S>>,
}

impl<'l, S: Clone> BeamSearch<'l, S> {
    pub fn new<M: LabelScorer<State = S>>(model: &M, cfg: BeamConfig, lm: Option<&'l NGramLm>) -> Result<Self> {
        if cfg.beam == 0 {
            return Err(Error::Usage("beam width must be at least 1".into()));
        }
        let start = Hypothesis { labels: vec![], total: 0.0, model: 0.0, lm: 0.0, state: model.start()? };
        Ok(Self { cfg, lm, hyps: vec![start] })
    }

    fn lm_weight(&self) -> f64 {
        if self.lm.is_some() {
            self.cfg.lm_weight
        } else {
            0.0
        }
    }

    /// Current hypotheses, best first.
    pub fn hypotheses(&self) -> &[Hypothesis<S>] {
        &self.hyps
    }

    pub fn advance<M: LabelScorer<State = S>>(&mut self, model: &M, frame: &[f64]) -> Result<()> {
        let blank = model.blank();
        let lambda = self.lm_weight();
        let mut ended: BTreeMap<Vec<usize>, Hypothesis<S>> = BTreeMap::new();
        let mut open = std::mem::take(&mut self.hyps);
        for depth in 0..=self.cfg.max_symbols {
            if open.is_empty() {
                break;
            }
            let mut pool = Vec::new();
            for (parent, h) in open.iter().enumerate() {
                let lp = model.log_probs(frame, &h.state);
                let can_emit = depth < self.cfg.max_symbols
                    && self.cfg.max_output_len.is_none_or(|cap| h.labels.len() < cap);
                if can_emit {
                    for (k, &l) in lp.iter().enumerate() {
                        if k == blank {
                            continue;
                        }
                        let lm_delta = self.lm.map_or(0.0, |lm| lm.log_prob(&h.labels, k));
                        let mut labels = h.labels.clone();
                        labels.push(k);
                        let (model_score, lm_score) = (h.model + l, h.lm + lm_delta);
                        pool.push(Candidate {
                            parent,
                            label: Some(k),
                            labels,
                            total: model_score + lambda * lm_score,
                            model: model_score,
                            lm: lm_score,
                            local: l,
                        });
                    }
                }
                let l = lp[blank];
                pool.push(Candidate {
                    parent,
                    label: None,
                    labels: h.labels.clone(),
                    total: h.model + l + lambda * h.lm,
                    model: h.model + l,
                    lm: h.lm,
                    local: l,
                });
            }
            pool.sort_by(|a, b| {
                b.total
                    .total_cmp(&a.total)
                    .then_with(|| b.local.total_cmp(&a.local))
                    .then_with(|| a.labels.cmp(&b.labels))
            });
            pool.truncate(self.cfg.beam);
            let mut survivors = Vec::new();
            for c in pool {
                let parent = &open[c.parent];
                match c.label {
                    None => match ended.get_mut(&c.labels) {
                        Some(e) => {
                            e.model = log_add(e.model, c.model);
                            e.total = e.model + lambda * e.lm;
                        }
                        None => {
                            let h = Hypothesis {
                                labels: c.labels.clone(),
                                total: c.total,
                                model: c.model,
                                lm: c.lm,
                                state: parent.state.clone(),
                            };
                            ended.insert(c.labels, h);
                        }
                    },
                    Some(k) => survivors.push(Hypothesis {
                        state: model.extend(&parent.state, k)?,
                        labels: c.labels,
                        total: c.total,
                        model: c.model,
                        lm: c.lm,
                    }),
                }
            }
            open = survivors;
        }
        let mut next: Vec<Hypothesis<S>> = ended.into_values().collect();
        next.sort_by(|a, b| rank(a.total, &a.labels, b.total, &b.labels));
        next.truncate(self.cfg.beam);
        self.hyps = next;
        Ok(())
    }

    /// Final hypotheses, best first under the configured ranking.
    pub fn finish(self) -> Vec<Hypothesis<S>> {
        let mut hyps = self.hyps;
        if self.cfg.length_norm {
            let norm = |h: &Hypothesis<S>| h.total / h.labels.len().max(1) as f64;
            hyps.sort_by(|a, b| rank(norm(a), &a.labels, norm(b), &b.labels));
        }
        hyps
    }

    pub fn decode<'a, M: LabelScorer<State = S>>(
        model: &M,
        frames: impl IntoIterator<Item = &'a [f64]>,
        cfg: BeamConfig,
        lm: Option<&'l NGramLm>,
    ) -> Result<Vec<Hypothesis<S>>> {
        let mut search = Self::new(model, cfg, lm)?;
        for f in frames {
            search.advance(model, f)?;
        }
        Ok(search.finish())
    }
}
