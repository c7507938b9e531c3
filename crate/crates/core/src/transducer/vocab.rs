use std::collections::HashMap;
use std::path::Path;

use crate::error::{Error, Result};

pub const BLANK_SYMBOL: &str = "<blank>";
pub const SOS_SYMBOL: &str = "<sos>";

/// Ordered output symbols. Index 0 is blank and index 1 the
/// sentence-start symbol ∅; transcripts use the remaining symbols.
///
/// The `-` grapheme doubles as the word separator: spaces in text map to
/// it and it renders back as a space.
#[derive(Clone, Debug, PartialEq, Eq)]
pub struct Vocabulary {
    symbols: Vec<String>,
    index: HashMap<String, usize>,
}

impl Vocabulary {
    pub const BLANK: usize = 0;
    pub const SOS: usize = 1;
    pub const WORD_SEPARATOR: &'static str = "-";

    /// 26 letters plus `'` and `-`, blank and ∅: 30 symbols.
    pub fn graphemes() -> Self {
        let mut symbols = vec![BLANK_SYMBOL.to_string(), SOS_SYMBOL.to_string()];
        symbols.extend(('A'..='Z').map(String::from));
        symbols.push("'".into());
        symbols.push("-".into());
        Self::from_symbols(symbols).expect("grapheme vocabulary is valid")
    }

    pub fn from_symbols(symbols: Vec<String>) -> Result<Self> {
        if symbols.len() < 3 || symbols[0] != BLANK_SYMBOL || symbols[1] != SOS_SYMBOL {
            return Err(Error::Config(format!(
                "vocabulary must start with {BLANK_SYMBOL} and {SOS_SYMBOL} and contain at least one symbol"
            )));
        }
        let mut index = HashMap::new();
        for (i, s) in symbols.iter().enumerate() {
            if s.is_empty() || s.chars().any(char::is_whitespace) {
                return Err(Error::Config(format!("vocabulary line {}: invalid symbol {s:?}", i + 1)));
            }
            if index.insert(s.clone(), i).is_some() {
                return Err(Error::Config(format!("vocabulary: duplicate symbol {s:?}")));
            }
        }
        Ok(Self { symbols, index })
    }

    pub fn len(&self) -> usize {
        self.symbols.len()
    }

    pub fn is_empty(&self) -> bool {
        self.symbols.is_empty()
    }

    pub fn symbols(&self) -> &[String] {
        &self.symbols
    }

    pub fn symbol(&self, id: usize) -> Option<&str> {
        self.symbols.get(id).map(String::as_str)
    }

    pub fn id(&self, symbol: &str) -> Option<usize> {
        self.index.get(symbol).copied()
    }

    /// Ids that may appear in a transcript.
    pub fn label_ids(&self) -> std::ops::Range<usize> {
        2..self.len()
    }

    /// One symbol per line.
    pub fn to_text(&self) -> String {
        self.symbols.iter().map(|s| format!("{s}\n")).collect()
    }

    pub fn from_text(text: &str) -> Result<Self> {
        Self::from_symbols(text.lines().map(str::to_string).collect())
    }

    pub fn load(path: &Path) -> Result<Self> {
        Self::from_text(&std::fs::read_to_string(path).map_err(|e| Error::io(path, e))?)
    }

    pub fn save(&self, path: &Path) -> Result<()> {
        std::fs::write(path, self.to_text()).map_err(|e| Error::io(path, e))
    }

    /// Maps text to label ids, one character per symbol.
    pub fn encode(&self, text: &str) -> Result<Vec<usize>> {
        text.trim()
            .chars()
            .map(|c| {
                let s = if c == ' ' { Self::WORD_SEPARATOR.to_string() } else { c.to_string() };
                match self.id(&s) {
                    Some(id) if self.label_ids().contains(&id) => Ok(id),
                    _ => Err(Error::Input(format!("symbol {c:?} is not in the vocabulary"))),
                }
            })
            .collect()
    }

    /// Renders label ids as text. Out-of-range ids render as `?`.
    pub fn decode(&self, ids: &[usize]) -> String {
        ids.iter()
            .map(|&id| match self.symbol(id) {
                Some(Self::WORD_SEPARATOR) => " ",
                Some(s) => s,
                None => "?",
            })
            .collect()
    }
}

#[cfg(test)]
mod tests {
    use super::*;

    #[test]
    fn grapheme_inventory() {
        let v = Vocabulary::graphemes();
        assert_eq!(v.len(), 30);
        assert_eq!(v.symbol(Vocabulary::BLANK), Some(BLANK_SYMBOL));
        assert_eq!(v.symbol(Vocabulary::SOS), Some(SOS_SYMBOL));
        assert_eq!(Vocabulary::from_text(&v.to_text()).unwrap(), v);
    }

    #[test]
    fn text_round_trip() {
        let v = Vocabulary::graphemes();
        let ids = v.encode("IT'S A TEST").unwrap();
        assert!(!ids.contains(&Vocabulary::BLANK));
        assert_eq!(v.decode(&ids), "IT'S A TEST");
        assert!(v.encode("a").is_err());
    }

    #[test]
    fn rejects_bad_files() {
        assert!(Vocabulary::from_text("A\nB\n").is_err());
        assert!(Vocabulary::from_text("<blank>\n<sos>\nA\nA\n").is_err());
    }
}
