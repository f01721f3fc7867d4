use std::collections::BTreeMap;

use serde::{Deserialize, Serialize};

use super::{
    cause_span_metrics, span_matches, span_metrics, word_metrics, CharTokenizer, DefaultTokenizer, MalformedPolicy,
    MetricsReport, ReportCounts, Tokenizer, TripletCounts, WhitespaceTokenizer,
};
use crate::codec::{parse_triplets, IssueCode, ParseIssue, TripletCandidate};
use crate::corpus::{CategorySet, Document, Span, Triplet};

/// Predictions and gold triplets of one document.
#[derive(Debug, Clone, Default, PartialEq, Eq, Serialize, Deserialize)]
pub struct EvalInstance {
    pub doc_id: String,
    pub pred: Vec<TripletCandidate>,
    pub gold: Vec<TripletCandidate>,
    pub issues: Vec<ParseIssue>,
}

impl EvalInstance {
    pub fn new(doc_id: impl Into<String>, pred: Vec<TripletCandidate>, gold: Vec<TripletCandidate>) -> Self {
        EvalInstance {
            doc_id: doc_id.into(),
            pred,
            gold,
            issues: Vec::new(),
        }
    }
}

#[derive(Debug, Clone, Copy, Default, PartialEq, Eq, Serialize, Deserialize)]
#[serde(rename_all = "lowercase")]
pub enum TokenizerKind {
    #[default]
    Default,
    Whitespace,
    Char,
}

impl TokenizerKind {
    pub fn tokenizer(self) -> &'static dyn Tokenizer {
        match self {
            TokenizerKind::Default => &DefaultTokenizer,
            TokenizerKind::Whitespace => &WhitespaceTokenizer,
            TokenizerKind::Char => &CharTokenizer,
        }
    }
}

impl std::str::FromStr for TokenizerKind {
    type Err = String;
    fn from_str(s: &str) -> Result<Self, Self::Err> {
        match s {
            "default" => Ok(TokenizerKind::Default),
            "whitespace" => Ok(TokenizerKind::Whitespace),
            "char" => Ok(TokenizerKind::Char),
            other => Err(format!("unknown tokenizer {other:?} (expected default|whitespace|char)")),
        }
    }
}

#[derive(Debug, Clone, Copy, Default, PartialEq, Eq, Serialize, Deserialize)]
pub struct EvalOptions {
    pub policy: MalformedPolicy,
    pub tokenizer: TokenizerKind,
}

/// Splits candidates into triplets whose spans both occur inside a clause of
/// `doc` and those that cannot be placed.
pub fn resolve_candidates(doc: &Document, candidates: &[TripletCandidate]) -> (Vec<Triplet>, Vec<usize>) {
    let mut resolved = Vec::new();
    let mut unresolved = Vec::new();
    for (i, c) in candidates.iter().enumerate() {
        match (doc.find_clause(&c.emotion), doc.find_clause(&c.cause)) {
            (Some(e), Some(k)) => resolved.push(Triplet {
                emotion: Span::new(c.emotion.clone(), e),
                cause: Span::new(c.cause.clone(), k),
                category: c.category.clone(),
            }),
            _ => unresolved.push(i),
        }
    }
    (resolved, unresolved)
}

/// Parses raw model output for `doc`. Lines that fail to parse, and
/// candidates whose spans occur in no clause, become issues.
pub fn instance_from_output(doc: &Document, output: &str, categories: &CategorySet) -> EvalInstance {
    let parsed = parse_triplets(output, categories);
    let (_, unresolved) = resolve_candidates(doc, &parsed.candidates);
    let lines: Vec<&str> = output.lines().collect();
    let mut issues = parsed.issues;
    let mut pred = Vec::new();
    let mut next = unresolved.iter().peekable();
    for (i, (cand, line_no)) in parsed.candidates.into_iter().zip(parsed.candidate_lines).enumerate() {
        if next.peek() == Some(&&i) {
            next.next();
            issues.push(ParseIssue {
                line_no,
                raw: lines.get(line_no - 1).copied().unwrap_or_default().to_string(),
                code: IssueCode::UnresolvedSpan,
            });
        } else {
            pred.push(cand);
        }
    }
    issues.sort_by_key(|i| i.line_no);
    EvalInstance {
        doc_id: doc.id.clone(),
        pred,
        gold: doc.triplets.iter().map(TripletCandidate::from).collect(),
        issues,
    }
}

/// Aggregates per-document matching into one report. Matching never crosses
/// document boundaries.
pub fn evaluate(instances: &[EvalInstance], options: &EvalOptions) -> MetricsReport {
    let tokenizer = options.tokenizer.tokenizer();
    let mut counts = ReportCounts::default();
    let mut per_category: BTreeMap<String, TripletCounts> = BTreeMap::new();
    let mut malformed = 0;
    for inst in instances {
        let (t, _) = span_metrics(&inst.pred, &inst.gold);
        let (w, _) = word_metrics(&inst.pred, &inst.gold, tokenizer);
        let pc: Vec<&str> = inst.pred.iter().map(|c| c.cause.as_str()).collect();
        let gc: Vec<&str> = inst.gold.iter().map(|c| c.cause.as_str()).collect();
        let (c, _) = cause_span_metrics(&pc, &gc);
        counts.triplets = counts.triplets + t;
        counts.words = counts.words + w;
        counts.cause_spans = counts.cause_spans + c;
        for (k, v) in span_matches(&inst.pred, &inst.gold) {
            let e = per_category.entry(k).or_default();
            *e = *e + v;
        }
        malformed += inst.issues.len();
    }
    if options.policy == MalformedPolicy::Penalize {
        counts.triplets.pt += malformed;
        counts.cause_spans.pt += malformed;
    }
    MetricsReport::from_counts(counts, per_category, malformed)
}
