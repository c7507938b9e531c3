//! Exhaustive-search oracles for the decoders.

use std::collections::hash_map::DefaultHasher;
use std::hash::{Hash, Hasher};

use msa_transducer::decoding::{LabelScorer, NGramLm};
use msa_transducer::transducer::Vocabulary;
use msa_transducer::Result;
use rand::{Rng, SeedableRng};
use rand_chacha::ChaCha8Rng;

use super::oracle::log_sum;

/// A toy transducer whose output distribution at (frame, prefix) is a
/// fixed pseudo-random table.
pub struct TableScorer {
    pub seed: u64,
    pub vocab: usize,
    /// Sharpness of the random logits.
    pub scale: f64,
}

impl LabelScorer for TableScorer {
    type State = Vec<usize>;
    fn blank(&self) -> usize {
        0
    }
    fn vocab_size(&self) -> usize {
        self.vocab
    }
    fn start(&self) -> Result<Vec<usize>> {
        Ok(vec![])
    }
    fn extend(&self, s: &Vec<usize>, k: usize) -> Result<Vec<usize>> {
        let mut s = s.clone();
        s.push(k);
        Ok(s)
    }
    fn log_probs(&self, frame: &[f64], s: &Vec<usize>) -> Vec<f64> {
        let mut h = DefaultHasher::new();
        (self.seed, frame[0] as u64, s).hash(&mut h);
        let mut r = ChaCha8Rng::seed_from_u64(h.finish());
        let logits: Vec<f64> = (0..self.vocab).map(|_| self.scale * r.random_range(-1.0..1.0)).collect();
        let z = log_sum(&logits);
        logits.iter().map(|l| l - z).collect()
    }
}

pub fn frame_rows(t_len: usize) -> Vec<Vec<f64>> {
    (0..t_len).map(|t| vec![t as f64]).collect()
}

/// Probability of `y` summed over alignments with at most `cap` labels per
/// frame, by recursion over (frame, labels emitted).
pub fn capped_log_prob(m: &TableScorer, t_len: usize, y: &[usize], cap: usize) -> f64 {
    fn go(m: &TableScorer, t: usize, u: usize, t_len: usize, y: &[usize], cap: usize) -> f64 {
        if t == t_len {
            return if u == y.len() { 0.0 } else { f64::NEG_INFINITY };
        }
        let mut terms = Vec::new();
        let mut acc = 0.0;
        for j in 0..=cap {
            if u + j > y.len() {
                break;
            }
            let lp = m.log_probs(&[t as f64], &y[..u + j].to_vec());
            terms.push(acc + lp[0] + go(m, t + 1, u + j, t_len, y, cap));
            if u + j < y.len() {
                acc += lp[y[u + j]];
            }
        }
        log_sum(&terms)
    }
    go(m, 0, 0, t_len, y, cap)
}

pub fn all_sequences(v: usize, max_len: usize) -> Vec<Vec<usize>> {
    let mut out = vec![vec![]];
    let mut frontier = vec![vec![]];
    for _ in 0..max_len {
        let mut next = Vec::new();
        for s in &frontier {
            for k in 1..v {
                let mut e: Vec<usize> = s.clone();
                e.push(k);
                next.push(e);
            }
        }
        out.extend(next.iter().cloned());
        frontier = next;
    }
    out
}

pub fn tiny_lm() -> (Vocabulary, NGramLm) {
    let vocab = Vocabulary::from_symbols(["<blank>", "<sos>", "A", "B"].map(String::from).to_vec()).unwrap();
    let lines = vec![vec![2, 3, 3], vec![3, 2], vec![2, 2, 3]];
    let lm = NGramLm::train(&lines, &vocab, 2, 0.5).unwrap();
    (vocab, lm)
}
