//! Augmentation pipeline: annotate each document, ask the generator for a
//! rewritten passage, parse it back, filter it against four rules and merge
//! the survivors into the corpus.

use std::collections::{BTreeMap, HashMap, HashSet};

use serde::{Deserialize, Serialize};

use crate::annotate::{annotate, annotation_to_document, parse_annotated, MarkerKind, ParseMode, ParsedAnnotation};
use crate::codec::parse_triplet_line;
use crate::corpus::{clause_containing, segment_clauses, CorpusOptions, Document};
use crate::gateway::{Gateway, GenerationRequest, DEFAULT_AUGMENTATION_TEMPERATURE};
use crate::prompts::{render_augmentation_prompt, PromptTemplate};

#[derive(Debug, Clone, PartialEq, Eq, Serialize, Deserialize)]
pub struct CandidateSample {
    pub source_id: String,
    /// 0-based repetition index for the source document.
    pub repetition: usize,
    pub raw_generation: String,
    #[serde(skip)]
    pub parsed: Option<Document>,
    /// Why no generation was obtained, if so.
    pub failure: Option<String>,
}

#[derive(Debug, Clone, PartialEq)]
pub struct AugmentOptions {
    pub n_per_doc: usize,
    pub model_id: String,
    pub temperature: f64,
    pub max_tokens: u32,
    pub parallelism: usize,
}

impl Default for AugmentOptions {
    fn default() -> Self {
        AugmentOptions {
            n_per_doc: 1,
            model_id: "mock".into(),
            temperature: DEFAULT_AUGMENTATION_TEMPERATURE,
            max_tokens: 1024,
            parallelism: 4,
        }
    }
}

impl CandidateSample {
    /// A candidate built from raw generated text.
    pub fn from_generation(source_id: &str, repetition: usize, raw: &str, corpus: &CorpusOptions) -> Self {
        CandidateSample {
            source_id: source_id.into(),
            repetition,
            raw_generation: raw.into(),
            parsed: parse_candidate(source_id, raw, corpus),
            failure: None,
        }
    }
}

fn parse_candidate(source_id: &str, raw: &str, corpus: &CorpusOptions) -> Option<Document> {
    let parsed = parse_annotated(raw, ParseMode::Lenient).ok()?;
    annotation_to_document(source_id, &parsed, &corpus.categories, &corpus.delimiters).ok()
}

/// `n_per_doc` candidates per document in (document, repetition) order.
/// Failures to annotate, render or generate are recorded on the candidate.
pub fn generate_candidates(
    docs: &[Document],
    template: &PromptTemplate,
    gateway: &Gateway,
    options: &AugmentOptions,
    corpus: &CorpusOptions,
) -> Vec<CandidateSample> {
    let mut slots: Vec<(String, usize, Result<GenerationRequest, String>)> = Vec::new();
    for doc in docs {
        let request = annotate(doc)
            .map_err(|e| format!("annotate: {e}"))
            .and_then(|a| render_augmentation_prompt(template, &a).map_err(|e| format!("prompt: {e}")));
        for rep in 0..options.n_per_doc {
            let req = request.clone().and_then(|turns| {
                GenerationRequest::new(
                    turns,
                    options.model_id.clone(),
                    options.temperature,
                    options.max_tokens,
                    format!("{}#{rep}", doc.id),
                )
                .map_err(|e| format!("request: {e}"))
            });
            slots.push((doc.id.clone(), rep, req));
        }
    }
    let ready: Vec<GenerationRequest> = slots.iter().filter_map(|(_, _, r)| r.as_ref().ok().cloned()).collect();
    let mut results = gateway.complete_batch(&ready, options.parallelism).into_iter();
    slots
        .into_iter()
        .map(|(source_id, repetition, req)| {
            let outcome = match req {
                Err(e) => Err(e),
                Ok(_) => results
                    .next()
                    .expect("one result per ready request")
                    .map(|r| r.text)
                    .map_err(|e| format!("generation: {e}")),
            };
            match outcome {
                Ok(raw) => CandidateSample {
                    parsed: parse_candidate(&source_id, &raw, corpus),
                    source_id,
                    repetition,
                    raw_generation: raw,
                    failure: None,
                },
                Err(note) => CandidateSample {
                    source_id,
                    repetition,
                    raw_generation: String::new(),
                    parsed: None,
                    failure: Some(note),
                },
            }
        })
        .collect()
}

#[derive(Debug, Clone, Copy, PartialEq, Eq, Hash, PartialOrd, Ord, Serialize, Deserialize)]
pub enum RuleId {
    /// Every span lies inside one clause.
    #[serde(rename = "R-A")]
    SpanInClause,
    /// Markers and the triplet list are well formed and agree.
    #[serde(rename = "R-B")]
    Format,
    /// Every category belongs to the category set.
    #[serde(rename = "R-C")]
    Category,
    /// Every source span survives inside its marker.
    #[serde(rename = "R-D")]
    Preservation,
}

impl RuleId {
    pub const ALL: [RuleId; 4] = [RuleId::SpanInClause, RuleId::Format, RuleId::Category, RuleId::Preservation];

    pub fn as_str(self) -> &'static str {
        match self {
            RuleId::SpanInClause => "R-A",
            RuleId::Format => "R-B",
            RuleId::Category => "R-C",
            RuleId::Preservation => "R-D",
        }
    }
}

#[derive(Debug, Clone, Copy, PartialEq, Eq, Serialize, Deserialize)]
#[serde(rename_all = "lowercase")]
pub enum RuleStatus {
    Pass,
    Fail,
    /// Not evaluated because the generation could not be parsed at all.
    Skipped,
}

#[derive(Debug, Clone, PartialEq, Eq, Serialize, Deserialize)]
pub struct RuleResult {
    pub status: RuleStatus,
    #[serde(skip_serializing_if = "Option::is_none")]
    pub detail: Option<String>,
}

impl RuleResult {
    fn pass() -> Self {
        RuleResult {
            status: RuleStatus::Pass,
            detail: None,
        }
    }

    fn fail(detail: impl Into<String>) -> Self {
        RuleResult {
            status: RuleStatus::Fail,
            detail: Some(detail.into()),
        }
    }

    fn skipped() -> Self {
        RuleResult {
            status: RuleStatus::Skipped,
            detail: None,
        }
    }

    fn from_errors(errors: Vec<String>) -> Self {
        if errors.is_empty() {
            RuleResult::pass()
        } else {
            RuleResult::fail(errors.join("; "))
        }
    }
}

#[derive(Debug, Clone, PartialEq, Eq, Serialize, Deserialize)]
pub struct FilterDecision {
    pub accepted: bool,
    pub rules: BTreeMap<RuleId, RuleResult>,
}

impl FilterDecision {
    fn new(rules: BTreeMap<RuleId, RuleResult>) -> Self {
        FilterDecision {
            accepted: rules.values().all(|r| r.status == RuleStatus::Pass),
            rules,
        }
    }

    pub fn failed_rules(&self) -> Vec<RuleId> {
        self.rules
            .iter()
            .filter(|(_, r)| r.status == RuleStatus::Fail)
            .map(|(id, _)| *id)
            .collect()
    }
}

fn short_circuit(detail: String) -> FilterDecision {
    let mut rules: BTreeMap<RuleId, RuleResult> = RuleId::ALL.iter().map(|id| (*id, RuleResult::skipped())).collect();
    rules.insert(RuleId::Format, RuleResult::fail(detail));
    FilterDecision::new(rules)
}

fn rule_span_in_clause(parsed: &ParsedAnnotation, corpus: &CorpusOptions) -> RuleResult {
    let clauses = match segment_clauses(&parsed.plain_text, &corpus.delimiters) {
        Ok(c) => c,
        Err(e) => return RuleResult::fail(format!("cannot segment generation: {e}")),
    };
    let errors = parsed
        .markers
        .iter()
        .filter(|m| clause_containing(&clauses, m.plain_range.start, m.plain_range.end).is_none())
        .map(|m| format!("{} {} span {:?} crosses a clause boundary", m.kind.keyword(), m.ordinal, m.span_text))
        .collect();
    RuleResult::from_errors(errors)
}

/// Appendix lines that are not blank, each parsed structurally.
fn appendix_lines(parsed: &ParsedAnnotation) -> Vec<(String, Option<crate::codec::RawTriplet>)> {
    parsed
        .appendix
        .as_deref()
        .unwrap_or_default()
        .lines()
        .filter_map(|l| parse_triplet_line(l).map(|r| (l.trim().to_string(), r.ok())))
        .collect()
}

fn rule_format(raw: &str, parsed: &ParsedAnnotation) -> RuleResult {
    if let Err(e) = parse_annotated(raw, ParseMode::Strict) {
        return RuleResult::fail(format!("marker pairing: {e}"));
    }
    if parsed.appendix.is_none() {
        return RuleResult::fail("no [Triplets] list");
    }
    let mut errors = Vec::new();
    let ordinals = parsed.paired_ordinals();
    if ordinals.iter().enumerate().any(|(i, o)| *o != i + 1) {
        errors.push(format!("marker ordinals {ordinals:?} are not 1..n"));
    }
    let lines = appendix_lines(parsed);
    if lines.len() != ordinals.len() {
        errors.push(format!(
            "{} triplet lines for {} marked triplets",
            lines.len(),
            ordinals.len()
        ));
    }
    for (i, (line, raw_triplet)) in lines.iter().enumerate() {
        let ordinal = i + 1;
        let Some(t) = raw_triplet else {
            errors.push(format!("triplet line {ordinal} is malformed: {line:?}"));
            continue;
        };
        for (kind, text) in [(MarkerKind::Emotion, &t.emotion), (MarkerKind::Cause, &t.cause)] {
            match parsed.marker(kind, ordinal) {
                Some(m) if &m.span_text == text => {}
                Some(m) => errors.push(format!(
                    "triplet line {ordinal} {} {text:?} differs from marked span {:?}",
                    kind.keyword(),
                    m.span_text
                )),
                None => errors.push(format!("triplet line {ordinal} has no {} marker", kind.keyword())),
            }
        }
    }
    RuleResult::from_errors(errors)
}

fn rule_category(parsed: &ParsedAnnotation, corpus: &CorpusOptions) -> RuleResult {
    if parsed.appendix.is_none() {
        return RuleResult::fail("no [Triplets] list");
    }
    let errors = appendix_lines(parsed)
        .into_iter()
        .filter_map(|(_, t)| t)
        .filter(|t| corpus.categories.resolve(&t.category).is_none())
        .map(|t| format!("unknown category {:?}", t.category))
        .collect();
    RuleResult::from_errors(errors)
}

fn rule_preservation(source: &Document, parsed: &ParsedAnnotation) -> RuleResult {
    let mut errors = Vec::new();
    for (i, t) in source.triplets.iter().enumerate() {
        let ordinal = i + 1;
        for (kind, text) in [(MarkerKind::Emotion, &t.emotion.text), (MarkerKind::Cause, &t.cause.text)] {
            match parsed.marker(kind, ordinal) {
                Some(m) if m.span_text.contains(text.as_str()) => {}
                Some(m) => errors.push(format!(
                    "{} {ordinal}: source span {text:?} not kept in {:?}",
                    kind.keyword(),
                    m.span_text
                )),
                None => errors.push(format!("{} {ordinal}: marker missing", kind.keyword())),
            }
        }
    }
    RuleResult::from_errors(errors)
}

/// Applies rules R-A..R-D to a candidate generated from `source`. All rules
/// are evaluated unless the markers cannot be parsed at all, in which case
/// R-B fails and the rest are skipped.
pub fn filter_candidate(candidate: &CandidateSample, source: &Document, corpus: &CorpusOptions) -> FilterDecision {
    if let Some(note) = &candidate.failure {
        return short_circuit(note.clone());
    }
    let parsed = match parse_annotated(&candidate.raw_generation, ParseMode::Lenient) {
        Ok(p) => p,
        Err(e) => return short_circuit(format!("markers do not parse: {e}")),
    };
    let rules = BTreeMap::from([
        (RuleId::SpanInClause, rule_span_in_clause(&parsed, corpus)),
        (RuleId::Format, rule_format(&candidate.raw_generation, &parsed)),
        (RuleId::Category, rule_category(&parsed, corpus)),
        (RuleId::Preservation, rule_preservation(source, &parsed)),
    ]);
    FilterDecision::new(rules)
}

fn normalize_ws(s: &str) -> String {
    s.split_whitespace().collect::<Vec<_>>().join(" ")
}

#[derive(Debug, Clone, PartialEq, Eq)]
pub struct MergeOutcome {
    pub corpus: Vec<Document>,
    pub duplicates_dropped: usize,
}

/// Originals followed by accepted documents. Each accepted document carries
/// its source id and is renamed `aug-<source>-<n>`, `n` counting from 1 per
/// source. Accepted texts that repeat an original, up to whitespace, are dropped.
pub fn merge_augmented(original: &[Document], accepted: &[Document]) -> MergeOutcome {
    let originals: HashSet<String> = original.iter().map(|d| normalize_ws(&d.text)).collect();
    let mut taken: HashSet<String> = original.iter().map(|d| d.id.clone()).collect();
    let mut counters: HashMap<&str, usize> = HashMap::new();
    let mut corpus = original.to_vec();
    let mut duplicates_dropped = 0;
    for doc in accepted {
        if originals.contains(&normalize_ws(&doc.text)) {
            duplicates_dropped += 1;
            continue;
        }
        let n = counters.entry(doc.id.as_str()).or_insert(0);
        let id = loop {
            *n += 1;
            let candidate = format!("aug-{}-{}", doc.id, n);
            if taken.insert(candidate.clone()) {
                break candidate;
            }
        };
        let mut d = doc.clone();
        d.id = id;
        corpus.push(d);
    }
    MergeOutcome {
        corpus,
        duplicates_dropped,
    }
}

#[derive(Debug, Clone, PartialEq, Serialize, Deserialize)]
pub struct AugmentationReport {
    pub generated: usize,
    pub generation_failures: usize,
    pub parsed: usize,
    pub accepted: usize,
    pub rejected_by_rule: BTreeMap<RuleId, usize>,
    pub duplicates_dropped: usize,
    pub corpus_size: usize,
    pub acceptance_rate: f64,
}

#[derive(Debug, Clone, PartialEq, Eq, Serialize, Deserialize)]
pub struct CandidateRecord {
    pub source_id: String,
    pub repetition: usize,
    pub decision: FilterDecision,
}

#[derive(Debug, Clone, PartialEq)]
pub struct AugmentOutcome {
    pub corpus: Vec<Document>,
    pub report: AugmentationReport,
    pub candidates: Vec<CandidateRecord>,
}

/// Builds the report for filtered candidates and the merge that followed.
pub fn summarize(
    candidates: &[CandidateSample],
    decisions: &[FilterDecision],
    merge: &MergeOutcome,
) -> AugmentationReport {
    let mut rejected_by_rule: BTreeMap<RuleId, usize> = RuleId::ALL.iter().map(|r| (*r, 0)).collect();
    for d in decisions {
        for r in d.failed_rules() {
            *rejected_by_rule.entry(r).or_default() += 1;
        }
    }
    let accepted = decisions.iter().filter(|d| d.accepted).count();
    let generated = candidates.len();
    AugmentationReport {
        generated,
        generation_failures: candidates.iter().filter(|c| c.failure.is_some()).count(),
        parsed: candidates.iter().filter(|c| c.parsed.is_some()).count(),
        accepted,
        rejected_by_rule,
        duplicates_dropped: merge.duplicates_dropped,
        corpus_size: merge.corpus.len(),
        acceptance_rate: if generated == 0 { 0.0 } else { accepted as f64 / generated as f64 },
    }
}

/// Generate, filter and merge in one pass.
pub fn augment_corpus(
    docs: &[Document],
    template: &PromptTemplate,
    gateway: &Gateway,
    options: &AugmentOptions,
    corpus: &CorpusOptions,
) -> AugmentOutcome {
    let candidates = generate_candidates(docs, template, gateway, options, corpus);
    let by_id: HashMap<&str, &Document> = docs.iter().map(|d| (d.id.as_str(), d)).collect();
    let decisions: Vec<FilterDecision> = candidates
        .iter()
        .map(|c| filter_candidate(c, by_id[c.source_id.as_str()], corpus))
        .collect();
    let accepted: Vec<Document> = candidates
        .iter()
        .zip(&decisions)
        .filter(|(_, d)| d.accepted)
        .filter_map(|(c, _)| c.parsed.clone())
        .collect();
    let merge = merge_augmented(docs, &accepted);
    let report = summarize(&candidates, &decisions, &merge);
    AugmentOutcome {
        corpus: merge.corpus,
        report,
        candidates: candidates
            .iter()
            .zip(decisions)
            .map(|(c, decision)| CandidateRecord {
                source_id: c.source_id.clone(),
                repetition: c.repetition,
                decision,
            })
            .collect(),
    }
}

#[cfg(test)]
mod tests {
    use super::*;
    use crate::corpus::{DelimiterSet, EmotionCategory, Span, Triplet};
    use crate::gateway::{Backend, BackendKind, CallError, MockBackend, RetryPolicy};
    use std::sync::Arc;

    fn opts() -> CorpusOptions {
        CorpusOptions::default()
    }

    fn source() -> Document {
        Document::new(
            "s1",
            "I was so happy, to be back home again.",
            vec![Triplet {
                emotion: Span::new("happy", 0),
                cause: Span::new("back home", 1),
                category: EmotionCategory::Happiness.into(),
            }],
            &DelimiterSet::default(),
        )
        .unwrap()
    }

    fn candidate(raw: &str) -> CandidateSample {
        CandidateSample::from_generation("s1", 0, raw, &opts())
    }

    fn failed(raw: &str) -> Vec<RuleId> {
        filter_candidate(&candidate(raw), &source(), &opts()).failed_rules()
    }

    #[test]
    fn identity_generation_passes() {
        let raw = annotate(&source()).unwrap();
        let d = filter_candidate(&candidate(&raw), &source(), &opts());
        assert!(d.accepted, "{d:?}");
        assert_eq!(candidate(&raw).parsed.unwrap(), source());
    }

    #[test]
    fn single_rule_violations() {
        let ok = annotate(&source()).unwrap();
        assert_eq!(
            ok,
            "I was so [Emotion 1]{happy}, to be [Cause 1]<back home> again.\n\n[Triplets]\n(happy, back home, Happiness)"
        );
        let cross = "I was so [Emotion 1]{happy}, to be [Cause 1]<back home， again>.\n\n[Triplets]\n(happy, back home， again, Happiness)";
        assert_eq!(failed(cross), [RuleId::SpanInClause]);
        let broken = "I was so [Emotion 1]{happy}, to be [Cause 1]<back home again.\n\n[Triplets]\n(happy, back home, Happiness)";
        assert_eq!(failed(broken), [RuleId::Format]);
        let d = filter_candidate(&candidate(broken), &source(), &opts());
        assert_eq!(d.rules[&RuleId::SpanInClause].status, RuleStatus::Skipped);
        let category = ok.replace(", Happiness)", ", Excited)");
        assert_eq!(failed(&category), [RuleId::Category]);
        let altered = ok.replace("happy", "glad");
        assert_eq!(failed(&altered), [RuleId::Preservation]);
    }

    #[test]
    fn format_checks_appendix_agreement() {
        let ok = annotate(&source()).unwrap();
        assert_eq!(failed(&ok.replace("(happy, back", "(glad, back")), [RuleId::Format]);
        let (body, _) = ok.split_once("\n\n").unwrap();
        assert_eq!(failed(body), [RuleId::Format, RuleId::Category]);
        let dangling = ok.replace("[Cause 1]<back home>", "back home");
        assert!(failed(&dangling).contains(&RuleId::Format));
    }

    #[test]
    fn merge_rules() {
        let c = vec![source()];
        assert_eq!(merge_augmented(&c, &[]).corpus, c);
        let dup = merge_augmented(&c, &[source()]);
        assert_eq!((dup.corpus.len(), dup.duplicates_dropped), (1, 1));
        let mut spaced = source();
        spaced.text = "I  was so happy,\tto be back home again.".into();
        assert_eq!(merge_augmented(&c, &[spaced]).duplicates_dropped, 1);
        let mut fresh = source();
        fresh.text = "I was glad, to be back home.".into();
        let m = merge_augmented(&c, &[fresh.clone(), fresh]);
        let ids: Vec<_> = m.corpus.iter().map(|d| d.id.as_str()).collect();
        assert_eq!(ids, ["s1", "aug-s1-1", "aug-s1-2"]);
        assert_eq!(c[0].id, "s1");
    }

    #[test]
    fn pipeline_with_echo_mock() {
        let mut other = source();
        other.id = "s2".into();
        let docs = vec![source(), other];
        let gw = Gateway::new(Arc::new(MockBackend::echo()), RetryPolicy::immediate(0));
        let options = AugmentOptions {
            n_per_doc: 3,
            ..Default::default()
        };
        let cands = generate_candidates(&docs, &PromptTemplate::default_augmentation(), &gw, &options, &opts());
        assert_eq!(cands.len(), 6);
        let order: Vec<_> = cands.iter().map(|c| (c.source_id.as_str(), c.repetition)).collect();
        assert_eq!(order[..4], [("s1", 0), ("s1", 1), ("s1", 2), ("s2", 0)]);
        let out = augment_corpus(&docs, &PromptTemplate::default_augmentation(), &gw, &options, &opts());
        assert_eq!(out.report.accepted, 6);
        assert_eq!(out.report.acceptance_rate, 1.0);
        assert_eq!(out.report.duplicates_dropped, 6);
        assert_eq!(out.corpus.len(), 2);
    }

    struct Down;
    impl Backend for Down {
        fn kind(&self) -> BackendKind {
            BackendKind::Http
        }
        fn call(&self, _: &GenerationRequest) -> Result<String, CallError> {
            Err(CallError::Transport("connection refused".into()))
        }
    }

    #[test]
    fn backend_down_is_recorded() {
        let gw = Gateway::new(Arc::new(Down), RetryPolicy::immediate(1));
        let out = augment_corpus(
            &[source()],
            &PromptTemplate::default_augmentation(),
            &gw,
            &AugmentOptions::default(),
            &opts(),
        );
        assert_eq!(out.report.generation_failures, 1);
        assert_eq!(out.report.accepted, 0);
        assert_eq!(out.report.rejected_by_rule[&RuleId::Format], 1);
        assert_eq!(out.corpus.len(), 1);
    }
}
