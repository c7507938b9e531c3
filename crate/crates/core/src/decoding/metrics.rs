use crate::error::{Error, Result};

/// Levenshtein distance with unit costs, in `O(len(b))` memory.
pub fn edit_distance<T: PartialEq>(a: &[T], b: &[T]) -> usize {
    let mut row: Vec<usize> = (0..=b.len()).collect();
    for (i, x) in a.iter().enumerate() {
        let mut diag = row[0];
        row[0] = i + 1;
        for (j, y) in b.iter().enumerate() {
            let next = (diag + usize::from(x != y)).min(row[j] + 1).min(row[j + 1] + 1);
            diag = row[j + 1];
            row[j + 1] = next;
        }
    }
    row[b.len()]
}

/// Edit and reference counts accumulated over a corpus.
#[derive(Clone, Copy, Debug, Default, PartialEq, Eq)]
pub struct ErrorCounts {
    pub char_edits: usize,
    pub chars: usize,
    pub word_edits: usize,
    pub words: usize,
}

impl ErrorCounts {
    pub fn of(hyp: &str, reference: &str) -> Self {
        let (h, r): (Vec<char>, Vec<char>) = (hyp.chars().collect(), reference.chars().collect());
        let (hw, rw): (Vec<&str>, Vec<&str>) = (hyp.split_whitespace().collect(), reference.split_whitespace().collect());
        Self { char_edits: edit_distance(&h, &r), chars: r.len(), word_edits: edit_distance(&hw, &rw), words: rw.len() }
    }

    pub fn add(&mut self, other: Self) {
        self.char_edits += other.char_edits;
        self.chars += other.chars;
        self.word_edits += other.word_edits;
        self.words += other.words;
    }

    /// `(CER, WER)`; errors when the reference is empty.
    pub fn rates(&self) -> Result<(f64, f64)> {
        if self.chars == 0 || self.words == 0 {
            return Err(Error::Input("empty reference".into()));
        }
        Ok((self.char_edits as f64 / self.chars as f64, self.word_edits as f64 / self.words as f64))
    }
}

/// Character and word error rates of `hyp` against `reference`; words are
/// whitespace-separated.
pub fn score_cer_wer(hyp: &str, reference: &str) -> Result<(f64, f64)> {
    ErrorCounts::of(hyp, reference).rates()
}
