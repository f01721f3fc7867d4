use serde::{Deserialize, Serialize};

use super::CorpusError;

/// Default clause terminators: CJK and Latin sentence punctuation, commas, newline.
pub const DEFAULT_DELIMITERS: &str = "。！？；，!?;,\n";

/// A clause of a document. Offsets are unicode scalar positions, half-open.
#[derive(Debug, Clone, PartialEq, Eq, Serialize, Deserialize)]
pub struct Clause {
    pub index: usize,
    pub text: String,
    pub char_start: usize,
    pub char_end: usize,
}

impl Clause {
    pub fn contains_range(&self, start: usize, end: usize) -> bool {
        start >= self.char_start && end <= self.char_end
    }
}

/// The set of characters that terminate a clause.
#[derive(Debug, Clone, PartialEq, Eq)]
pub struct DelimiterSet {
    chars: Vec<char>,
}

impl Default for DelimiterSet {
    fn default() -> Self {
        DelimiterSet {
            chars: DEFAULT_DELIMITERS.chars().collect(),
        }
    }
}

impl DelimiterSet {
    pub fn new(chars: impl IntoIterator<Item = char>) -> Result<Self, CorpusError> {
        let mut out: Vec<char> = Vec::new();
        for c in chars {
            if !out.contains(&c) {
                out.push(c);
            }
        }
        if out.is_empty() {
            return Err(CorpusError::EmptyDelimiters);
        }
        Ok(DelimiterSet { chars: out })
    }

    pub fn from_str_chars(s: &str) -> Result<Self, CorpusError> {
        DelimiterSet::new(s.chars())
    }

    pub fn is_delimiter(&self, c: char) -> bool {
        self.chars.contains(&c)
    }

    pub fn chars(&self) -> &[char] {
        &self.chars
    }
}

/// Splits `text` into clauses. Every delimiter closes the clause it ends; a
/// trailing undelimited segment forms a final clause. Joining the clause
/// texts gives back `text`.
pub fn segment_clauses(text: &str, delimiters: &DelimiterSet) -> Result<Vec<Clause>, CorpusError> {
    if text.is_empty() {
        return Err(CorpusError::EmptyInput);
    }
    let mut clauses = Vec::new();
    let mut current = String::new();
    let mut start = 0usize;
    let mut pos = 0usize;
    for c in text.chars() {
        current.push(c);
        pos += 1;
        if delimiters.is_delimiter(c) {
            clauses.push(Clause {
                index: clauses.len(),
                text: std::mem::take(&mut current),
                char_start: start,
                char_end: pos,
            });
            start = pos;
        }
    }
    if !current.is_empty() {
        clauses.push(Clause {
            index: clauses.len(),
            text: current,
            char_start: start,
            char_end: pos,
        });
    }
    Ok(clauses)
}

/// Index of the clause that holds the char range `[start, end)`, if one does.
pub fn clause_containing(clauses: &[Clause], start: usize, end: usize) -> Option<usize> {
    clauses
        .iter()
        .find(|c| c.contains_range(start, end))
        .map(|c| c.index)
}
