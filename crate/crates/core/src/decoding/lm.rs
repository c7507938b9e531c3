use std::collections::BTreeMap;
use std::fmt::Write as _;
use std::path::Path;

use crate::error::{Error, Result};
use crate::transducer::Vocabulary;

const HEADER: &str = "ngram-lm 1";

/// Count-based n-gram model over vocabulary ids with add-k smoothing.
///
/// Outcomes are every symbol except blank; ∅ pads histories at the start
/// of a line and is also the end-of-line outcome. For a history `h` the
/// model uses the longest suffix of `h` seen in training and returns
/// `(c(h', w) + k) / (c(h') + k·|S|)`, so each conditional distribution is
/// normalized on its own.
#[derive(Clone, Debug, PartialEq)]
pub struct NGramLm {
    order: usize,
    k: f64,
    symbols: Vec<String>,
    /// Counts of `history ++ [next]` for history lengths `0..order`.
    counts: BTreeMap<Vec<usize>, u64>,
    /// Number of times each history was followed by anything.
    history: BTreeMap<Vec<usize>, u64>,
}

impl NGramLm {
    pub fn train(lines: &[Vec<usize>], vocab: &Vocabulary, order: usize, k: f64) -> Result<Self> {
        if !(2..=4).contains(&order) {
            return Err(Error::Config(format!("n-gram order must be 2, 3 or 4, got {order}")));
        }
        if !(k > 0.0 && k.is_finite()) {
            return Err(Error::Config(format!("add-k constant must be positive, got {k}")));
        }
        let mut counts = BTreeMap::new();
        for line in lines {
            if let Some(bad) = line.iter().find(|s| !vocab.label_ids().contains(s)) {
                return Err(Error::Input(format!("LM training line contains non-label id {bad}")));
            }
            let mut padded = vec![Vocabulary::SOS; order - 1];
            padded.extend_from_slice(line);
            padded.push(Vocabulary::SOS);
            for end in order - 1..padded.len() {
                for len in 0..order {
                    *counts.entry(padded[end - len..=end].to_vec()).or_insert(0) += 1;
                }
            }
        }
        Ok(Self::from_counts(order, k, vocab.symbols().to_vec(), counts))
    }

    fn from_counts(order: usize, k: f64, symbols: Vec<String>, counts: BTreeMap<Vec<usize>, u64>) -> Self {
        let mut history = BTreeMap::new();
        for (gram, &c) in &counts {
            *history.entry(gram[..gram.len() - 1].to_vec()).or_insert(0) += c;
        }
        Self { order, k, symbols, counts, history }
    }

    pub fn order(&self) -> usize {
        self.order
    }

    pub fn symbols(&self) -> &[String] {
        &self.symbols
    }

    /// Size of the outcome set (all symbols but blank).
    fn outcomes(&self) -> f64 {
        (self.symbols.len() - 1) as f64
    }

    fn is_outcome(&self, id: usize) -> bool {
        id != Vocabulary::BLANK && id < self.symbols.len()
    }

    /// `log p(next | prefix)`. Ids outside the outcome set get the
    /// unigram smoothing floor.
    pub fn log_prob(&self, prefix: &[usize], next: usize) -> f64 {
        let total = self.history.get(&[][..]).copied().unwrap_or(0) as f64;
        if !self.is_outcome(next) {
            return (self.k / (total + self.k * self.outcomes())).ln();
        }
        let mut context = vec![Vocabulary::SOS; self.order - 1];
        context.extend_from_slice(prefix);
        let context = &context[context.len() - (self.order - 1)..];
        for len in (0..self.order).rev() {
            let h = &context[context.len() - len..];
            if let Some(&hc) = self.history.get(h) {
                let mut gram = h.to_vec();
                gram.push(next);
                let c = self.counts.get(&gram).copied().unwrap_or(0) as f64;
                return ((c + self.k) / (hc as f64 + self.k * self.outcomes())).ln();
            }
        }
        -self.outcomes().ln()
    }

    /// Sum of per-symbol log-probabilities, without the end symbol.
    pub fn sequence_log_prob(&self, labels: &[usize]) -> f64 {
        (0..labels.len()).map(|i| self.log_prob(&labels[..i], labels[i])).sum()
    }

    /// Header lines, then one `<n-gram symbols>\t<count>` line per n-gram in
    /// id order.
    pub fn to_text(&self) -> String {
        let mut out = format!("{HEADER}\norder={}\nk={}\nsymbols={}\n", self.order, self.k, self.symbols.join(" "));
        for (gram, c) in &self.counts {
            let names: Vec<&str> = gram.iter().map(|&i| self.symbols[i].as_str()).collect();
            writeln!(out, "{}\t{c}", names.join(" ")).expect("writing to a string");
        }
        out
    }

    pub fn from_text(text: &str) -> Result<Self> {
        let bad = |what: &str| Error::Input(format!("LM file: {what}"));
        let mut lines = text.lines();
        if lines.next() != Some(HEADER) {
            return Err(bad("missing header"));
        }
        let mut field = |key: &str| {
            lines
                .next()
                .and_then(|l| l.strip_prefix(key))
                .and_then(|l| l.strip_prefix('='))
                .map(str::to_string)
                .ok_or_else(|| bad(&format!("missing {key}")))
        };
        let order: usize = field("order")?.parse().map_err(|_| bad("order"))?;
        let k: f64 = field("k")?.parse().map_err(|_| bad("k"))?;
        let symbols: Vec<String> = field("symbols")?.split(' ').map(str::to_string).collect();
        if !(2..=4).contains(&order) || !(k > 0.0) || symbols.len() < 3 {
            return Err(bad("invalid header values"));
        }
        let index: BTreeMap<&str, usize> = symbols.iter().enumerate().map(|(i, s)| (s.as_str(), i)).collect();
        let mut counts = BTreeMap::new();
        for line in lines {
            let (gram, c) = line.split_once('\t').ok_or_else(|| bad(&format!("line {line:?}")))?;
            let ids: Option<Vec<usize>> = gram.split(' ').map(|s| index.get(s).copied()).collect();
            let ids = ids.ok_or_else(|| bad(&format!("unknown symbol in {gram:?}")))?;
            if ids.is_empty() || ids.len() > order {
                return Err(bad(&format!("n-gram length in {gram:?}")));
            }
            counts.insert(ids, c.parse().map_err(|_| bad(&format!("count {c:?}")))?);
        }
        Ok(Self::from_counts(order, k, symbols, counts))
    }

    pub fn save(&self, path: &Path) -> Result<()> {
        std::fs::write(path, self.to_text()).map_err(|e| Error::io(path, e))
    }

    pub fn load(path: &Path) -> Result<Self> {
        Self::from_text(&std::fs::read_to_string(path).map_err(|e| Error::io(path, e))?)
    }

    /// Checks that the model was built for `vocab`.
    pub fn check_vocabulary(&self, vocab: &Vocabulary) -> Result<()> {
        if self.symbols != vocab.symbols() {
            return Err(Error::Config("LM symbol set does not match the model vocabulary".into()));
        }
        Ok(())
    }
}
