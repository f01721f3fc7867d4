//! Auxiliary labeling: marks each triplet's spans in the text as
//! `[Emotion i]{span}` and `[Cause i]<span>` and appends the triplet list
//! under a `[Triplets]` header.

use std::collections::BTreeMap;
use std::ops::Range;

use serde::{Deserialize, Serialize};

use crate::codec::{self, TripletCandidate};
use crate::corpus::{clause_containing, CategorySet, DelimiterSet, Document, Span, Triplet};

/// Header line that introduces the appended triplet list.
pub const TRIPLET_SECTION: &str = "[Triplets]";

#[derive(Debug, Clone, PartialEq, Eq, thiserror::Error)]
pub enum AnnotateError {
    #[error("triplet {ordinal}: {kind:?} span {text:?} not found in clause {clause_index}")]
    SpanNotFound {
        ordinal: usize,
        kind: MarkerKind,
        text: String,
        clause_index: usize,
    },
    #[error("triplet {ordinal}: no occurrence of {kind:?} span {text:?} avoids overlapping another marker")]
    OverlappingSpans {
        ordinal: usize,
        kind: MarkerKind,
        text: String,
    },
    #[error("triplet {ordinal}: {kind:?} span {text:?} contains its own closing delimiter")]
    UnencodableSpan {
        ordinal: usize,
        kind: MarkerKind,
        text: String,
    },
}

#[derive(Debug, Clone, PartialEq, Eq, thiserror::Error)]
pub enum AnnotationError {
    #[error("unbalanced marker delimiter at char {at}: {detail}")]
    UnbalancedDelimiter { at: usize, detail: String },
    #[error("duplicate {kind:?} marker for ordinal {ordinal}")]
    DuplicateOrdinal { kind: MarkerKind, ordinal: usize },
    #[error("{kind:?} marker {ordinal} has no matching {missing:?} marker")]
    DanglingOrdinal {
        kind: MarkerKind,
        missing: MarkerKind,
        ordinal: usize,
    },
    #[error("{kind:?} marker {ordinal} has an empty span")]
    EmptySpan { kind: MarkerKind, ordinal: usize },
}

#[derive(Debug, Clone, Copy, PartialEq, Eq, Hash, PartialOrd, Ord, Serialize, Deserialize)]
pub enum MarkerKind {
    Emotion,
    Cause,
}

impl MarkerKind {
    pub fn keyword(self) -> &'static str {
        match self {
            MarkerKind::Emotion => "Emotion",
            MarkerKind::Cause => "Cause",
        }
    }

    pub fn delimiters(self) -> (char, char) {
        match self {
            MarkerKind::Emotion => ('{', '}'),
            MarkerKind::Cause => ('<', '>'),
        }
    }

    fn other(self) -> MarkerKind {
        match self {
            MarkerKind::Emotion => MarkerKind::Cause,
            MarkerKind::Cause => MarkerKind::Emotion,
        }
    }
}

#[derive(Debug, Clone, PartialEq, Eq, Serialize, Deserialize)]
pub struct AnnotatedMarker {
    pub kind: MarkerKind,
    /// 1-based triplet ordinal.
    pub ordinal: usize,
    pub span_text: String,
    /// Char range of the whole marker (tag plus delimited span) in the annotated string.
    pub char_range: Range<usize>,
    /// Char range of the bare span in the recovered plain text.
    pub plain_range: Range<usize>,
}

#[derive(Debug, Clone, PartialEq, Eq, Serialize, Deserialize)]
pub struct ParsedAnnotation {
    pub plain_text: String,
    pub markers: Vec<AnnotatedMarker>,
    /// Text after the `[Triplets]` header, when one is present.
    pub appendix: Option<String>,
}

impl ParsedAnnotation {
    pub fn marker(&self, kind: MarkerKind, ordinal: usize) -> Option<&AnnotatedMarker> {
        self.markers.iter().find(|m| m.kind == kind && m.ordinal == ordinal)
    }

    /// Ordinals that carry both an emotion and a cause marker, ascending.
    pub fn paired_ordinals(&self) -> Vec<usize> {
        let mut by_ordinal: BTreeMap<usize, (bool, bool)> = BTreeMap::new();
        for m in &self.markers {
            let entry = by_ordinal.entry(m.ordinal).or_default();
            match m.kind {
                MarkerKind::Emotion => entry.0 = true,
                MarkerKind::Cause => entry.1 = true,
            }
        }
        by_ordinal
            .into_iter()
            .filter(|(_, (e, c))| *e && *c)
            .map(|(o, _)| o)
            .collect()
    }
}

#[derive(Debug, Clone, Copy, PartialEq, Eq, Default)]
pub enum ParseMode {
    /// Collects every well-formed marker; only broken syntax and duplicate
    /// ordinals are errors.
    #[default]
    Lenient,
    /// Additionally requires each ordinal to carry exactly one emotion and one
    /// cause marker, and every span to be non-empty.
    Strict,
}

fn char_positions(haystack: &[char], needle: &[char]) -> Vec<usize> {
    if needle.is_empty() || needle.len() > haystack.len() {
        return Vec::new();
    }
    (0..=haystack.len() - needle.len())
        .filter(|&i| haystack[i..i + needle.len()] == *needle)
        .collect()
}

struct Placement {
    start: usize,
    end: usize,
    kind: MarkerKind,
    ordinal: usize,
}

struct Slot<'a> {
    kind: MarkerKind,
    ordinal: usize,
    text: &'a str,
    hits: Vec<(usize, usize)>,
}

fn occurrences<'a>(doc: &Document, span: &'a Span, kind: MarkerKind, ordinal: usize) -> Result<Slot<'a>, AnnotateError> {
    let (_, close) = kind.delimiters();
    if span.text.contains(close) {
        return Err(AnnotateError::UnencodableSpan {
            ordinal,
            kind,
            text: span.text.clone(),
        });
    }
    let not_found = || AnnotateError::SpanNotFound {
        ordinal,
        kind,
        text: span.text.clone(),
        clause_index: span.clause_index,
    };
    let clause = doc.clause(span.clause_index).ok_or_else(not_found)?;
    let clause_chars: Vec<char> = clause.text.chars().collect();
    let needle: Vec<char> = span.text.chars().collect();
    let hits: Vec<(usize, usize)> = char_positions(&clause_chars, &needle)
        .into_iter()
        .map(|h| (clause.char_start + h, clause.char_start + h + needle.len()))
        .collect();
    if hits.is_empty() {
        return Err(not_found());
    }
    Ok(Slot {
        kind,
        ordinal,
        text: &span.text,
        hits,
    })
}

const PLACEMENT_BUDGET: usize = 100_000;

/// Depth-first choice of one occurrence per slot with no two overlapping,
/// earliest occurrences first. Returns the chosen hit index per slot, or the
/// deepest slot that could not be placed.
fn assign(slots: &[Slot]) -> Result<Vec<usize>, usize> {
    let mut choice: Vec<usize> = Vec::with_capacity(slots.len());
    let mut next = 0usize;
    let mut deepest = 0usize;
    let mut steps = 0usize;
    loop {
        let depth = choice.len();
        if depth == slots.len() {
            return Ok(choice);
        }
        steps += 1;
        if steps > PLACEMENT_BUDGET {
            return Err(deepest);
        }
        deepest = deepest.max(depth);
        let free = |&(s, e): &(usize, usize)| {
            choice
                .iter()
                .enumerate()
                .all(|(i, &c)| {
                    let (ps, pe) = slots[i].hits[c];
                    e <= ps || s >= pe
                })
        };
        match slots[depth].hits.iter().enumerate().skip(next).find(|(_, h)| free(h)) {
            Some((i, _)) => {
                choice.push(i);
                next = 0;
            }
            None => match choice.pop() {
                Some(prev) => next = prev + 1,
                None => return Err(deepest),
            },
        }
    }
}

/// Annotates `doc`. Triplet `i` (1-based) gets markers numbered `i`. Each
/// span is wrapped at an occurrence inside its clause such that no two
/// markers overlap, preferring earlier occurrences for earlier triplets.
pub fn annotate(doc: &Document) -> Result<String, AnnotateError> {
    annotate_body(doc, &doc.triplets).map(|body| {
        let mut out = body;
        out.push_str("\n\n");
        out.push_str(TRIPLET_SECTION);
        out.push('\n');
        out.push_str(&codec::format_triplets(&doc.triplets));
        out
    })
}

/// Marks spans in the text without appending the triplet list.
pub fn annotate_body(doc: &Document, triplets: &[Triplet]) -> Result<String, AnnotateError> {
    let mut slots = Vec::with_capacity(triplets.len() * 2);
    for (i, t) in triplets.iter().enumerate() {
        slots.push(occurrences(doc, &t.emotion, MarkerKind::Emotion, i + 1)?);
        slots.push(occurrences(doc, &t.cause, MarkerKind::Cause, i + 1)?);
    }
    let choice = assign(&slots).map_err(|at| AnnotateError::OverlappingSpans {
        ordinal: slots[at].ordinal,
        kind: slots[at].kind,
        text: slots[at].text.to_string(),
    })?;
    let mut placed: Vec<Placement> = slots
        .iter()
        .zip(&choice)
        .map(|(slot, &c)| Placement {
            start: slot.hits[c].0,
            end: slot.hits[c].1,
            kind: slot.kind,
            ordinal: slot.ordinal,
        })
        .collect();
    placed.sort_by_key(|p| p.start);

    let mut out = String::with_capacity(doc.text.len() + placed.len() * 16);
    let mut next = placed.iter().peekable();
    let mut closing: Option<char> = None;
    let mut close_at = usize::MAX;
    for (pos, c) in doc.text.chars().enumerate() {
        if pos == close_at {
            out.push(closing.take().expect("closing delimiter set with position"));
            close_at = usize::MAX;
        }
        if let Some(p) = next.peek() {
            if p.start == pos {
                let (open, close) = p.kind.delimiters();
                out.push('[');
                out.push_str(p.kind.keyword());
                out.push(' ');
                out.push_str(&p.ordinal.to_string());
                out.push(']');
                out.push(open);
                closing = Some(close);
                close_at = p.end;
                next.next();
            }
        }
        out.push(c);
    }
    if let Some(close) = closing {
        out.push(close);
    }
    Ok(out)
}

/// Splits off the appended triplet list. The body loses the line break(s)
/// that `annotate` writes before the header.
pub fn split_appendix(annotated: &str) -> (&str, Option<&str>) {
    let mut offset = 0usize;
    let mut header: Option<(usize, usize)> = None;
    for line in annotated.split_inclusive('\n') {
        if line.trim().eq_ignore_ascii_case(TRIPLET_SECTION) {
            header = Some((offset, offset + line.len()));
        }
        offset += line.len();
    }
    match header {
        None => (annotated, None),
        Some((start, end)) => {
            let raw = &annotated[..start];
            let body = raw
                .strip_suffix("\n\n")
                .or_else(|| raw.strip_suffix('\n'))
                .unwrap_or(raw);
            (body, Some(&annotated[end..]))
        }
    }
}

/// Matches `[ Emotion 12 ]` style tags at the start of `chars`, returning the
/// kind, ordinal and tag length (including whitespace up to the opening delimiter).
fn match_tag(chars: &[char]) -> Option<(MarkerKind, usize, usize)> {
    let mut i = 1;
    let skip_ws = |i: &mut usize| {
        while *i < chars.len() && chars[*i].is_whitespace() {
            *i += 1;
        }
    };
    skip_ws(&mut i);
    let kind = [MarkerKind::Emotion, MarkerKind::Cause].into_iter().find(|k| {
        let kw: Vec<char> = k.keyword().chars().collect();
        chars.len() >= i + kw.len() && chars[i..i + kw.len()] == *kw
    })?;
    i += kind.keyword().chars().count();
    skip_ws(&mut i);
    let digits_start = i;
    while i < chars.len() && chars[i].is_ascii_digit() {
        i += 1;
    }
    if i == digits_start {
        return None;
    }
    let ordinal: usize = chars[digits_start..i].iter().collect::<String>().parse().ok()?;
    skip_ws(&mut i);
    if chars.get(i) != Some(&']') {
        return None;
    }
    i += 1;
    skip_ws(&mut i);
    Some((kind, ordinal, i))
}

/// Recovers the plain text and markers from annotated text.
pub fn parse_annotated(annotated: &str, mode: ParseMode) -> Result<ParsedAnnotation, AnnotationError> {
    let (body, appendix) = split_appendix(annotated);
    let chars: Vec<char> = body.chars().collect();
    let mut plain = String::with_capacity(body.len());
    let mut plain_len = 0usize;
    let mut markers: Vec<AnnotatedMarker> = Vec::new();
    let mut i = 0usize;
    while i < chars.len() {
        if chars[i] != '[' {
            plain.push(chars[i]);
            plain_len += 1;
            i += 1;
            continue;
        }
        let Some((kind, ordinal, tag_len)) = match_tag(&chars[i..]) else {
            plain.push('[');
            plain_len += 1;
            i += 1;
            continue;
        };
        let (open, close) = kind.delimiters();
        let open_at = i + tag_len;
        if chars.get(open_at) != Some(&open) {
            return Err(AnnotationError::UnbalancedDelimiter {
                at: open_at,
                detail: format!("expected {open:?} after {} {ordinal} tag", kind.keyword()),
            });
        }
        let Some(rel_close) = chars[open_at + 1..].iter().position(|&c| c == close) else {
            return Err(AnnotationError::UnbalancedDelimiter {
                at: open_at,
                detail: format!("{} {ordinal} span is never closed with {close:?}", kind.keyword()),
            });
        };
        let close_at = open_at + 1 + rel_close;
        let span: String = chars[open_at + 1..close_at].iter().collect();
        if span.contains('\n') || match_tag_anywhere(&chars[open_at + 1..close_at]) {
            return Err(AnnotationError::UnbalancedDelimiter {
                at: open_at,
                detail: format!("{} {ordinal} span runs into another marker or line", kind.keyword()),
            });
        }
        if markers.iter().any(|m| m.kind == kind && m.ordinal == ordinal) {
            return Err(AnnotationError::DuplicateOrdinal { kind, ordinal });
        }
        let span_len = close_at - open_at - 1;
        markers.push(AnnotatedMarker {
            kind,
            ordinal,
            span_text: span.clone(),
            char_range: i..close_at + 1,
            plain_range: plain_len..plain_len + span_len,
        });
        plain.push_str(&span);
        plain_len += span_len;
        i = close_at + 1;
    }

    if mode == ParseMode::Strict {
        for m in &markers {
            if m.span_text.trim().is_empty() {
                return Err(AnnotationError::EmptySpan {
                    kind: m.kind,
                    ordinal: m.ordinal,
                });
            }
            let other = m.kind.other();
            if !markers.iter().any(|o| o.kind == other && o.ordinal == m.ordinal) {
                return Err(AnnotationError::DanglingOrdinal {
                    kind: m.kind,
                    missing: other,
                    ordinal: m.ordinal,
                });
            }
        }
    }

    Ok(ParsedAnnotation {
        plain_text: plain,
        markers,
        appendix: appendix.map(str::to_string),
    })
}

fn match_tag_anywhere(chars: &[char]) -> bool {
    (0..chars.len()).any(|i| chars[i] == '[' && match_tag(&chars[i..]).is_some())
}

/// Rebuilds a document from a parsed annotation. Each paired ordinal becomes a
/// triplet whose category comes from the same-numbered appendix line; spans are
/// assigned the clause holding the marker start. Ordinals without a resolvable
/// category are skipped.
pub fn annotation_to_document(
    id: &str,
    parsed: &ParsedAnnotation,
    categories: &CategorySet,
    delimiters: &DelimiterSet,
) -> Result<Document, crate::corpus::CorpusError> {
    let appendix_entries: Vec<Option<TripletCandidate>> = parsed
        .appendix
        .as_deref()
        .map(|a| {
            a.lines()
                .filter_map(codec::parse_triplet_line)
                .map(|r| {
                    r.ok().and_then(|raw| {
                        categories.resolve(&raw.category).map(|category| TripletCandidate {
                            emotion: raw.emotion,
                            cause: raw.cause,
                            category,
                        })
                    })
                })
                .collect()
        })
        .unwrap_or_default();

    let mut doc = Document::new(id, parsed.plain_text.clone(), Vec::new(), delimiters)?;
    for ordinal in parsed.paired_ordinals() {
        let Some(Some(entry)) = appendix_entries.get(ordinal - 1) else {
            continue;
        };
        let emotion = parsed.marker(MarkerKind::Emotion, ordinal).expect("paired");
        let cause = parsed.marker(MarkerKind::Cause, ordinal).expect("paired");
        let clause_of = |r: &Range<usize>| {
            clause_containing(&doc.clauses, r.start, r.end)
                .or_else(|| clause_containing(&doc.clauses, r.start, r.start + 1))
                .unwrap_or(0)
        };
        let triplet = Triplet {
            emotion: Span::new(emotion.span_text.clone(), clause_of(&emotion.plain_range)),
            cause: Span::new(cause.span_text.clone(), clause_of(&cause.plain_range)),
            category: entry.category.clone(),
        };
        doc.triplets.push(triplet);
    }
    Ok(doc)
}
