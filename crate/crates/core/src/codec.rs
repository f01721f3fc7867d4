//! Canonical line encoding of triplet lists and a total parser for model output.
//!
//! One triplet per line: `(emotion, cause, Category)`. The first field is the
//! emotion span, the last field is the category, and everything between the
//! first and last comma is the cause span, so causes may contain commas while
//! emotion spans may not.

use serde::{Deserialize, Serialize};

use crate::corpus::{Category, CategorySet, Triplet};

/// A triplet read back from text: span texts and category, no clause indices.
#[derive(Debug, Clone, PartialEq, Eq, Hash, PartialOrd, Ord, Serialize, Deserialize)]
pub struct TripletCandidate {
    pub emotion: String,
    pub cause: String,
    pub category: Category,
}

impl From<&Triplet> for TripletCandidate {
    fn from(t: &Triplet) -> Self {
        TripletCandidate {
            emotion: t.emotion.text.clone(),
            cause: t.cause.text.clone(),
            category: t.category.clone(),
        }
    }
}

#[derive(Debug, Clone, Copy, PartialEq, Eq, Hash, Serialize, Deserialize)]
pub enum IssueCode {
    NotATriplet,
    UnknownCategory,
    EmptySpan,
    TooFewFields,
    /// A span that occurs in no clause of the source document.
    UnresolvedSpan,
}

#[derive(Debug, Clone, PartialEq, Eq, Serialize, Deserialize)]
pub struct ParseIssue {
    /// 1-based line number in the parsed text.
    pub line_no: usize,
    pub raw: String,
    pub code: IssueCode,
}

/// Fields of a structurally well-formed line whose category is not yet resolved.
#[derive(Debug, Clone, PartialEq, Eq)]
pub struct RawTriplet {
    pub emotion: String,
    pub cause: String,
    pub category: String,
}

#[derive(Debug, Clone, Default, PartialEq, Eq, Serialize, Deserialize)]
pub struct TripletParse {
    pub candidates: Vec<TripletCandidate>,
    /// 1-based source line of each candidate.
    pub candidate_lines: Vec<usize>,
    pub issues: Vec<ParseIssue>,
}

pub fn format_line(emotion: &str, cause: &str, category: &str) -> String {
    format!("({emotion}, {cause}, {category})")
}

pub fn format_candidates(candidates: &[TripletCandidate]) -> String {
    candidates
        .iter()
        .map(|c| format_line(&c.emotion, &c.cause, c.category.as_str()))
        .collect::<Vec<_>>()
        .join("\n")
}

pub fn format_triplets(triplets: &[Triplet]) -> String {
    triplets
        .iter()
        .map(|t| format_line(&t.emotion.text, &t.cause.text, t.category.as_str()))
        .collect::<Vec<_>>()
        .join("\n")
}

fn strip_numbering(s: &str) -> &str {
    let trimmed = s.trim_start();
    let digits = trimmed.chars().take_while(|c| c.is_ascii_digit()).count();
    if digits == 0 {
        return trimmed;
    }
    let rest = &trimmed[digits..];
    let mut chars = rest.chars();
    match chars.next() {
        Some('.' | ')' | '、' | ':') => chars.as_str().trim_start(),
        _ => trimmed,
    }
}

fn strip_brackets(s: &str) -> (&str, bool) {
    const PAIRS: [(char, char); 4] = [('(', ')'), ('[', ']'), ('（', '）'), ('【', '】')];
    let mut cur = s.trim();
    let mut stripped = false;
    loop {
        let before = cur;
        for (open, close) in PAIRS {
            if let Some(inner) = cur.strip_prefix(open).and_then(|r| r.strip_suffix(close)) {
                cur = inner.trim();
                stripped = true;
            }
        }
        if cur == before {
            return (cur, stripped);
        }
    }
}

fn strip_bullet(s: &str) -> &str {
    let t = s.trim_start();
    for bullet in ["- ", "* ", "• "] {
        if let Some(rest) = t.strip_prefix(bullet) {
            return rest;
        }
    }
    t
}

/// Structural parse of one line. `None` for blank lines.
pub fn parse_triplet_line(line: &str) -> Option<Result<RawTriplet, IssueCode>> {
    if line.trim().is_empty() {
        return None;
    }
    let body = strip_numbering(strip_bullet(line));
    let (body, bracketed) = strip_brackets(body);
    let body = strip_numbering(body);
    if !body.contains(',') {
        return Some(Err(if bracketed {
            IssueCode::TooFewFields
        } else {
            IssueCode::NotATriplet
        }));
    }
    let first = body.find(',').expect("checked above");
    let last = body.rfind(',').expect("checked above");
    if first == last {
        return Some(Err(IssueCode::TooFewFields));
    }
    let emotion = body[..first].trim();
    let cause = body[first + 1..last].trim();
    let category = body[last + 1..].trim();
    if emotion.is_empty() || cause.is_empty() {
        return Some(Err(IssueCode::EmptySpan));
    }
    Some(Ok(RawTriplet {
        emotion: emotion.to_string(),
        cause: cause.to_string(),
        category: category.to_string(),
    }))
}

/// Parses arbitrary model output. Never fails: every non-blank line becomes
/// either a candidate or an issue.
pub fn parse_triplets(text: &str, categories: &CategorySet) -> TripletParse {
    let mut out = TripletParse::default();
    for (i, line) in text.lines().enumerate() {
        let outcome = match parse_triplet_line(line) {
            None => continue,
            Some(r) => r.and_then(|raw| {
                categories
                    .resolve(&raw.category)
                    .map(|category| TripletCandidate {
                        emotion: raw.emotion,
                        cause: raw.cause,
                        category,
                    })
                    .ok_or(IssueCode::UnknownCategory)
            }),
        };
        match outcome {
            Ok(candidate) => {
                out.candidates.push(candidate);
                out.candidate_lines.push(i + 1);
            }
            Err(code) => out.issues.push(ParseIssue {
                line_no: i + 1,
                raw: line.to_string(),
                code,
            }),
        }
    }
    out
}

#[cfg(test)]
mod tests {
    use super::*;
    use crate::corpus::{EmotionCategory, Span};
    use proptest::prelude::*;

    fn cat(c: EmotionCategory) -> Category {
        c.into()
    }

    fn triplet(e: &str, c: &str, k: EmotionCategory) -> Triplet {
        Triplet {
            emotion: Span::new(e, 0),
            cause: Span::new(c, 0),
            category: k.into(),
        }
    }

    #[test]
    fn format_case_two_gold() {
        let ts = [triplet("afraid", "spending the night alone", EmotionCategory::Fear)];
        assert_eq!(format_triplets(&ts), "(afraid, spending the night alone, Fear)");
    }

    #[test]
    fn format_empty_and_order() {
        assert_eq!(format_triplets(&[]), "");
        let ts = [
            triplet("a", "b", EmotionCategory::Anger),
            triplet("c", "d", EmotionCategory::Disgust),
        ];
        assert_eq!(format_triplets(&ts), "(a, b, Anger)\n(c, d, Disgust)");
    }

    #[test]
    fn parse_case_one_gold() {
        let p = parse_triplets(
            "(happy, this child has become a part of our family, Happiness)",
            &CategorySet::standard(),
        );
        assert!(p.issues.is_empty());
        assert_eq!(
            p.candidates,
            vec![TripletCandidate {
                emotion: "happy".into(),
                cause: "this child has become a part of our family".into(),
                category: cat(EmotionCategory::Happiness),
            }]
        );
    }

    #[test]
    fn interior_commas_belong_to_cause() {
        let p = parse_triplets("(sad, he left, alone at night, Sadness)", &CategorySet::standard());
        assert_eq!(p.candidates[0].emotion, "sad");
        assert_eq!(p.candidates[0].cause, "he left, alone at night");
        assert_eq!(p.candidates[0].category, cat(EmotionCategory::Sadness));
    }

    #[test]
    fn two_fields_is_too_few() {
        let p = parse_triplets("(happy, Happiness)", &CategorySet::standard());
        assert!(p.candidates.is_empty());
        assert_eq!(p.issues[0].code, IssueCode::TooFewFields);
        assert_eq!(p.issues[0].raw, "(happy, Happiness)");
    }

    #[test]
    fn numbering_inside_and_outside_brackets() {
        let set = CategorySet::standard();
        let p = parse_triplets("1. (moved, an act of bravery, happiness)\n(0. a, b, Fear)", &set);
        assert!(p.issues.is_empty(), "{:?}", p.issues);
        assert_eq!(p.candidates[0].emotion, "moved");
        assert_eq!(p.candidates[0].category, cat(EmotionCategory::Happiness));
        assert_eq!(p.candidates[1].emotion, "a");
    }

    #[test]
    fn unknown_category_and_prose() {
        let set = CategorySet::standard();
        let p = parse_triplets("Here are the results:\n\n(glad, a gift, Excited)\n( , x, Fear)", &set);
        assert!(p.candidates.is_empty());
        let codes: Vec<_> = p.issues.iter().map(|i| (i.line_no, i.code)).collect();
        assert_eq!(
            codes,
            vec![
                (1, IssueCode::NotATriplet),
                (3, IssueCode::UnknownCategory),
                (4, IssueCode::EmptySpan)
            ]
        );
    }

    #[test]
    fn category_match_ignores_case_and_whitespace_only() {
        let set = CategorySet::standard();
        assert_eq!(parse_triplets("(a, b,   FEAR  )", &set).candidates.len(), 1);
        assert_eq!(parse_triplets("(a, b, 'Fear')", &set).issues[0].code, IssueCode::UnknownCategory);
        assert_eq!(parse_triplets("(a, b, Fearful)", &set).issues[0].code, IssueCode::UnknownCategory);
    }

    fn span_text() -> impl Strategy<Value = String> {
        "[a-z我们很][a-z我们很 ']{0,12}[a-z我们很]".prop_map(|s| s)
    }

    fn cause_text() -> impl Strategy<Value = String> {
        "[a-z我们很][a-z我们很 ,']{0,16}[a-z我们很]".prop_map(|s| s)
    }

    proptest! {
        #![proptest_config(ProptestConfig::with_cases(500))]
        #[test]
        fn format_parse_roundtrip(items in prop::collection::vec((span_text(), cause_text(), 0usize..6), 0..6)) {
            let ts: Vec<Triplet> = items
                .iter()
                .map(|(e, c, k)| triplet(e, c, EmotionCategory::ALL[*k]))
                .collect();
            let parsed = parse_triplets(&format_triplets(&ts), &CategorySet::standard());
            prop_assert!(parsed.issues.is_empty());
            let expected: Vec<TripletCandidate> = ts.iter().map(TripletCandidate::from).collect();
            prop_assert_eq!(parsed.candidates, expected);
        }

        #[test]
        fn parse_is_total_and_partitions_lines(text in "(\\PC{0,30}\n?){0,8}") {
            let parsed = parse_triplets(&text, &CategorySet::standard());
            let non_blank = text.lines().filter(|l| !l.trim().is_empty()).count();
            prop_assert_eq!(parsed.candidates.len() + parsed.issues.len(), non_blank);
        }
    }
}
