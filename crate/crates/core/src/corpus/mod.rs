//! Corpus data model: documents, clauses, spans and triplets, plus the JSONL
//! corpus codec and structural validation.
//!
//! Clauses are never stored on disk. They are derived from the document text
//! with [`segment_clauses`] whenever a corpus is loaded, so a record only
//! carries `id`, `text` and its gold triplets.

mod category;
mod segment;

use std::collections::HashSet;
use std::fmt;
use std::io::{BufRead, Write};
use std::path::Path;

use serde::{Deserialize, Serialize};

pub use category::{Category, CategorySet, EmotionCategory, UnknownCategory};
pub use segment::{clause_containing, segment_clauses, Clause, DelimiterSet, DEFAULT_DELIMITERS};

#[derive(Debug, thiserror::Error)]
pub enum CorpusError {
    #[error("input text is empty")]
    EmptyInput,
    #[error("delimiter set is empty")]
    EmptyDelimiters,
    #[error("invalid category set: {0}")]
    InvalidCategorySet(String),
    #[error("{path}: {source}")]
    Io {
        path: String,
        #[source]
        source: std::io::Error,
    },
    #[error("line {line}: malformed record: {reason}")]
    MalformedRecord { line: usize, reason: String },
    #[error("line {line}: duplicate document id {id:?}")]
    DuplicateId { id: String, line: usize },
    #[error("{}document {doc_id:?}: {detail}", line.map(|l| format!("line {l}: ")).unwrap_or_default())]
    InvariantViolation {
        line: Option<usize>,
        doc_id: String,
        detail: String,
    },
}

/// A span of text claimed to lie inside clause `clause_index`.
#[derive(Debug, Clone, PartialEq, Eq, Hash, Serialize, Deserialize)]
pub struct Span {
    pub text: String,
    pub clause_index: usize,
}

impl Span {
    pub fn new(text: impl Into<String>, clause_index: usize) -> Self {
        Span {
            text: text.into(),
            clause_index,
        }
    }
}

#[derive(Debug, Clone, PartialEq, Eq, Hash, Serialize, Deserialize)]
pub struct Triplet {
    pub emotion: Span,
    pub cause: Span,
    pub category: Category,
}

#[derive(Debug, Clone, PartialEq, Eq)]
pub struct Document {
    pub id: String,
    pub text: String,
    pub clauses: Vec<Clause>,
    pub triplets: Vec<Triplet>,
}

impl Document {
    /// Builds a document, deriving clauses from `text`. No triplet checks are
    /// made here; see [`validate_document`].
    pub fn new(
        id: impl Into<String>,
        text: impl Into<String>,
        triplets: Vec<Triplet>,
        delimiters: &DelimiterSet,
    ) -> Result<Self, CorpusError> {
        let text = text.into();
        let clauses = segment_clauses(&text, delimiters)?;
        Ok(Document {
            id: id.into(),
            text,
            clauses,
            triplets,
        })
    }

    /// Index of the clause whose text contains `needle`, first match wins.
    pub fn find_clause(&self, needle: &str) -> Option<usize> {
        self.clauses
            .iter()
            .find(|c| c.text.contains(needle))
            .map(|c| c.index)
    }

    pub fn clause(&self, index: usize) -> Option<&Clause> {
        self.clauses.get(index)
    }
}

/// Machine-readable validation codes.
#[derive(Debug, Clone, Copy, PartialEq, Eq, Hash, Serialize, Deserialize)]
#[serde(rename_all = "SCREAMING_SNAKE_CASE")]
pub enum ViolationCode {
    EmptyId,
    EmptyText,
    ClauseOrder,
    ClauseEmpty,
    ClauseCoverage,
    ClauseTextMismatch,
    ClauseIndexOutOfRange,
    EmptySpan,
    SpanNotInClause,
}

impl fmt::Display for ViolationCode {
    fn fmt(&self, f: &mut fmt::Formatter<'_>) -> fmt::Result {
        let s = serde_json::to_value(self)
            .ok()
            .and_then(|v| v.as_str().map(str::to_string))
            .unwrap_or_default();
        f.write_str(&s)
    }
}

#[derive(Debug, Clone, PartialEq, Eq, Serialize, Deserialize)]
pub struct Violation {
    pub code: ViolationCode,
    pub detail: String,
}

#[derive(Debug, Clone, Default, PartialEq, Eq, Serialize, Deserialize)]
pub struct ValidationReport {
    pub violations: Vec<Violation>,
}

impl ValidationReport {
    pub fn is_empty(&self) -> bool {
        self.violations.is_empty()
    }

    pub fn has(&self, code: ViolationCode) -> bool {
        self.violations.iter().any(|v| v.code == code)
    }

    fn push(&mut self, code: ViolationCode, detail: impl Into<String>) {
        self.violations.push(Violation {
            code,
            detail: detail.into(),
        });
    }
}

fn char_slice(text: &str, start: usize, end: usize) -> Option<String> {
    if start > end {
        return None;
    }
    let total = text.chars().count();
    if end > total {
        return None;
    }
    Some(text.chars().skip(start).take(end - start).collect())
}

/// Checks every structural invariant of `doc`. Violations are data: an empty
/// report means the document is valid.
pub fn validate_document(doc: &Document) -> ValidationReport {
    let mut report = ValidationReport::default();
    if doc.id.trim().is_empty() {
        report.push(ViolationCode::EmptyId, "document id is empty");
    }
    if doc.text.is_empty() {
        report.push(ViolationCode::EmptyText, "document text is empty");
    }

    let total = doc.text.chars().count();
    let mut expected_start = 0usize;
    for (pos, clause) in doc.clauses.iter().enumerate() {
        if clause.index != pos {
            report.push(
                ViolationCode::ClauseOrder,
                format!("clause at position {pos} has index {}", clause.index),
            );
        }
        if clause.char_end <= clause.char_start {
            report.push(
                ViolationCode::ClauseEmpty,
                format!("clause {pos} has range {}..{}", clause.char_start, clause.char_end),
            );
        }
        if clause.char_start != expected_start {
            report.push(
                ViolationCode::ClauseCoverage,
                format!(
                    "clause {pos} starts at {} but previous coverage ends at {expected_start}",
                    clause.char_start
                ),
            );
        }
        match char_slice(&doc.text, clause.char_start, clause.char_end) {
            Some(slice) if slice == clause.text => {}
            _ => report.push(
                ViolationCode::ClauseTextMismatch,
                format!(
                    "clause {pos} text does not match document range {}..{}",
                    clause.char_start, clause.char_end
                ),
            ),
        }
        expected_start = clause.char_end;
    }
    if expected_start != total && !doc.text.is_empty() {
        report.push(
            ViolationCode::ClauseCoverage,
            format!("clauses cover {expected_start} of {total} characters"),
        );
    }

    for (i, triplet) in doc.triplets.iter().enumerate() {
        for (role, span) in [("emotion", &triplet.emotion), ("cause", &triplet.cause)] {
            if span.text.is_empty() {
                report.push(ViolationCode::EmptySpan, format!("triplet {i}: {role} span is empty"));
                continue;
            }
            match doc.clauses.get(span.clause_index) {
                None => report.push(
                    ViolationCode::ClauseIndexOutOfRange,
                    format!(
                        "triplet {i}: {role} span refers to clause {} of {}",
                        span.clause_index,
                        doc.clauses.len()
                    ),
                ),
                Some(clause) if !clause.text.contains(&span.text) => report.push(
                    ViolationCode::SpanNotInClause,
                    format!(
                        "triplet {i}: {role} span {:?} not found in clause {}",
                        span.text, span.clause_index
                    ),
                ),
                Some(_) => {}
            }
        }
    }
    report
}

/// Options that shape how a corpus is interpreted.
#[derive(Debug, Clone, Default)]
pub struct CorpusOptions {
    pub delimiters: DelimiterSet,
    pub categories: CategorySet,
}

#[derive(Debug, Clone, Serialize, Deserialize)]
#[serde(deny_unknown_fields)]
struct SpanRecord {
    text: String,
    clause_index: usize,
}

#[derive(Debug, Clone, Serialize, Deserialize)]
#[serde(deny_unknown_fields)]
struct TripletRecord {
    emotion: SpanRecord,
    cause: SpanRecord,
    category: String,
}

#[derive(Debug, Clone, Serialize, Deserialize)]
#[serde(deny_unknown_fields)]
struct DocumentRecord {
    id: String,
    text: String,
    #[serde(default)]
    triplets: Vec<TripletRecord>,
}

impl From<&Document> for DocumentRecord {
    fn from(doc: &Document) -> Self {
        DocumentRecord {
            id: doc.id.clone(),
            text: doc.text.clone(),
            triplets: doc
                .triplets
                .iter()
                .map(|t| TripletRecord {
                    emotion: SpanRecord {
                        text: t.emotion.text.clone(),
                        clause_index: t.emotion.clause_index,
                    },
                    cause: SpanRecord {
                        text: t.cause.text.clone(),
                        clause_index: t.cause.clause_index,
                    },
                    category: t.category.as_str().to_string(),
                })
                .collect(),
        }
    }
}

fn record_to_document(
    record: DocumentRecord,
    line: usize,
    options: &CorpusOptions,
) -> Result<Document, CorpusError> {
    let violation = |detail: String| CorpusError::InvariantViolation {
        line: Some(line),
        doc_id: record.id.clone(),
        detail,
    };
    let mut triplets = Vec::with_capacity(record.triplets.len());
    for (i, t) in record.triplets.iter().enumerate() {
        let category = options
            .categories
            .resolve(&t.category)
            .ok_or_else(|| violation(format!("triplet {i}: unknown category {:?}", t.category)))?;
        triplets.push(Triplet {
            emotion: Span::new(t.emotion.text.clone(), t.emotion.clause_index),
            cause: Span::new(t.cause.text.clone(), t.cause.clause_index),
            category,
        });
    }
    let doc = Document::new(record.id.clone(), record.text.clone(), triplets, &options.delimiters)
        .map_err(|e| violation(e.to_string()))?;
    let report = validate_document(&doc);
    if !report.is_empty() {
        let detail = report
            .violations
            .iter()
            .map(|v| format!("{}: {}", v.code, v.detail))
            .collect::<Vec<_>>()
            .join("; ");
        return Err(violation(detail));
    }
    Ok(doc)
}

/// Parses a JSONL corpus from any reader. Blank lines are skipped.
pub fn read_corpus<R: BufRead>(reader: R, options: &CorpusOptions) -> Result<Vec<Document>, CorpusError> {
    let mut docs = Vec::new();
    let mut first_error = None;
    scan_corpus(reader, options, |r| match r {
        Ok(d) => {
            docs.push(d);
            true
        }
        Err(e) => {
            first_error = Some(e);
            false
        }
    });
    match first_error {
        Some(e) => Err(e),
        None => Ok(docs),
    }
}

/// Parses every record, collecting all errors instead of stopping at the first.
pub fn read_corpus_lenient<R: BufRead>(reader: R, options: &CorpusOptions) -> (Vec<Document>, Vec<CorpusError>) {
    let mut docs = Vec::new();
    let mut errors = Vec::new();
    scan_corpus(reader, options, |r| {
        match r {
            Ok(d) => docs.push(d),
            Err(e) => errors.push(e),
        }
        true
    });
    (docs, errors)
}

/// Feeds each record outcome to `sink` until it returns false.
fn scan_corpus<R: BufRead>(reader: R, options: &CorpusOptions, mut sink: impl FnMut(Result<Document, CorpusError>) -> bool) {
    let mut seen = HashSet::new();
    for (i, line) in reader.lines().enumerate() {
        let line_no = i + 1;
        let outcome = line
            .map_err(|e| CorpusError::MalformedRecord {
                line: line_no,
                reason: e.to_string(),
            })
            .and_then(|line| {
                if line.trim().is_empty() {
                    return Ok(None);
                }
                let record: DocumentRecord =
                    serde_json::from_str(&line).map_err(|e| CorpusError::MalformedRecord {
                        line: line_no,
                        reason: e.to_string(),
                    })?;
                if !seen.insert(record.id.clone()) {
                    return Err(CorpusError::DuplicateId {
                        id: record.id,
                        line: line_no,
                    });
                }
                record_to_document(record, line_no, options).map(Some)
            });
        let keep_going = match outcome {
            Ok(None) => true,
            Ok(Some(doc)) => sink(Ok(doc)),
            Err(e) => sink(Err(e)),
        };
        if !keep_going {
            return;
        }
    }
}

pub fn load_corpus(path: &Path, options: &CorpusOptions) -> Result<Vec<Document>, CorpusError> {
    let file = std::fs::File::open(path).map_err(|e| CorpusError::Io {
        path: path.display().to_string(),
        source: e,
    })?;
    read_corpus(std::io::BufReader::new(file), options)
}

pub fn write_corpus<W: Write>(mut writer: W, docs: &[Document]) -> std::io::Result<()> {
    for doc in docs {
        let line = serde_json::to_string(&DocumentRecord::from(doc)).map_err(std::io::Error::other)?;
        writeln!(writer, "{line}")?;
    }
    writer.flush()
}

/// Inverse of [`load_corpus`].
pub fn save_corpus(path: &Path, docs: &[Document]) -> Result<(), CorpusError> {
    let io_err = |e| CorpusError::Io {
        path: path.display().to_string(),
        source: e,
    };
    let file = std::fs::File::create(path).map_err(io_err)?;
    write_corpus(std::io::BufWriter::new(file), docs).map_err(io_err)
}

/// Serializes a single document as one corpus JSONL line (no trailing newline).
pub fn document_to_json_line(doc: &Document) -> String {
    serde_json::to_string(&DocumentRecord::from(doc)).expect("document record serializes")
}
