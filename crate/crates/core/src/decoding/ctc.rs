use std::collections::BTreeMap;

use crate::error::{Error, Result};
use crate::numcore::kernels::{argmax, log_add};
use crate::numcore::Tensor;

use super::{rank, NGramLm};

/// Frame-wise argmax, then merge repeats and drop blanks.
pub fn ctc_greedy(log_probs: &Tensor, blank: usize) -> Vec<usize> {
    let mut out = Vec::new();
    let mut prev = None;
    for row in log_probs.rows() {
        let k = argmax(row);
        if Some(k) != prev && k != blank {
            out.push(k);
        }
        prev = Some(k);
    }
    out
}

#[derive(Clone, Debug, PartialEq)]
pub struct CtcHypothesis {
    pub labels: Vec<usize>,
    /// `model + λ·lm`.
    pub total: f64,
    /// Log-probability of the prefix summed over its frame alignments.
    pub model: f64,
    pub lm: f64,
}

#[derive(Clone, Copy)]
struct PrefixScore {
    /// Alignments ending in blank.
    blank: f64,
    /// Alignments ending in the last label.
    label: f64,
    lm: f64,
}

impl PrefixScore {
    fn model(&self) -> f64 {
        log_add(self.blank, self.label)
    }
}

/// Prefix beam search over `log_probs [T, V]` with optional shallow fusion.
/// With a beam at least as large as the number of reachable prefixes the
/// result is the exact most probable label sequence.
pub fn ctc_beam_search(
    log_probs: &Tensor,
    blank: usize,
    beam: usize,
    lm_weight: f64,
    lm: Option<&NGramLm>,
) -> Result<Vec<CtcHypothesis>> {
    if beam == 0 {
        return Err(Error::Usage("beam width must be at least 1".into()));
    }
    if log_probs.rank() != 2 {
        return Err(Error::dim("ctc_beam_search", format!("log-probs {:?}", log_probs.shape())));
    }
    let lambda = if lm.is_some() { lm_weight } else { 0.0 };
    let ninf = f64::NEG_INFINITY;
    let mut beams: BTreeMap<Vec<usize>, PrefixScore> = BTreeMap::new();
    beams.insert(vec![], PrefixScore { blank: 0.0, label: ninf, lm: 0.0 });
    for lp in log_probs.rows() {
        let mut next: BTreeMap<Vec<usize>, PrefixScore> = BTreeMap::new();
        for (prefix, s) in &beams {
            let entry = next.entry(prefix.clone()).or_insert(PrefixScore { blank: ninf, label: ninf, lm: s.lm });
            entry.blank = log_add(entry.blank, s.model() + lp[blank]);
            let last = prefix.last().copied();
            if let Some(last) = last {
                entry.label = log_add(entry.label, s.label + lp[last]);
            }
            for (k, &l) in lp.iter().enumerate() {
                if k == blank {
                    continue;
                }
                let mut extended = prefix.clone();
                extended.push(k);
                // A repeated label needs a blank in between.
                let from = if Some(k) == last { s.blank } else { s.model() };
                let e = next.entry(extended).or_insert_with(|| PrefixScore {
                    blank: ninf,
                    label: ninf,
                    lm: s.lm + lm.map_or(0.0, |m| m.log_prob(prefix, k)),
                });
                e.label = log_add(e.label, from + l);
            }
        }
        let mut ranked: Vec<(Vec<usize>, PrefixScore)> =
            next.into_iter().filter(|(_, s)| s.model() > f64::NEG_INFINITY).collect();
        ranked.sort_by(|(pa, a), (pb, b)| rank(a.model() + lambda * a.lm, pa, b.model() + lambda * b.lm, pb));
        ranked.truncate(beam);
        beams = ranked.into_iter().collect();
    }
    let mut out: Vec<CtcHypothesis> = beams
        .into_iter()
        .map(|(labels, s)| CtcHypothesis { labels, total: s.model() + lambda * s.lm, model: s.model(), lm: s.lm })
        .collect();
    out.sort_by(|a, b| rank(a.total, &a.labels, b.total, &b.labels));
    Ok(out)
}

#[cfg(test)]
mod tests {
    use super::*;

    fn frames(rows: &[[f64; 3]]) -> Tensor {
        Tensor::from_rows(&rows.iter().map(|r| r.iter().map(|p| p.ln()).collect()).collect::<Vec<_>>(), 3).unwrap()
    }

    #[test]
    fn greedy_collapses_repeats_across_blanks() {
        // a a blank a
        let lp = frames(&[[0.1, 0.8, 0.1], [0.1, 0.8, 0.1], [0.8, 0.1, 0.1], [0.1, 0.8, 0.1]]);
        assert_eq!(ctc_greedy(&lp, 0), vec![1, 1]);
    }

    #[test]
    fn single_frame_beam() {
        let lp = frames(&[[0.2, 0.5, 0.3]]);
        let hyps = ctc_beam_search(&lp, 0, 4, 0.0, None).unwrap();
        assert_eq!(hyps[0].labels, vec![1]);
        assert!((hyps[0].model - 0.5f64.ln()).abs() < 1e-15);
    }
}
