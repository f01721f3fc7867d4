//! Evaluation: span-level and word-level precision/recall/F1, cause-span
//! extraction scores, k-fold planning and fold aggregation.
//!
//! Every ratio with a zero denominator is defined as 0, and F1 is 0 whenever
//! P + R = 0, so reports are total.

mod eval;
mod kfold;
mod span;
mod word;

use std::collections::BTreeMap;

use serde::{Deserialize, Serialize};

pub use eval::{evaluate, instance_from_output, resolve_candidates, EvalInstance, EvalOptions, TokenizerKind};
pub use kfold::{aggregate_folds, fold_csv, kfold_split, Aggregation, FoldPlan, FoldSummary, Headline, KFoldError};
pub use span::{cause_span_metrics, span_matches, span_metrics};
pub use word::{span_words, word_metrics, CharTokenizer, DefaultTokenizer, Tokenizer, WhitespaceTokenizer};

/// Harmonic mean of `p` and `r`; 0 when both are 0.
pub fn f1(p: f64, r: f64) -> f64 {
    if p + r == 0.0 {
        0.0
    } else {
        2.0 * p * r / (p + r)
    }
}

pub(crate) fn ratio(num: usize, den: usize) -> f64 {
    if den == 0 {
        0.0
    } else {
        num as f64 / den as f64
    }
}

fn round4(x: f64) -> f64 {
    (x * 10_000.0).round() / 10_000.0
}

#[derive(Debug, Clone, Copy, Default, PartialEq, Serialize, Deserialize)]
pub struct Prf {
    pub precision: f64,
    pub recall: f64,
    pub f1: f64,
}

impl Prf {
    pub fn new(precision: f64, recall: f64) -> Self {
        Prf {
            precision,
            recall,
            f1: f1(precision, recall),
        }
    }

    pub fn from_counts(c: TripletCounts) -> Self {
        Prf::new(ratio(c.ct, c.pt), ratio(c.ct, c.at))
    }

    fn rounded(self) -> Self {
        Prf {
            precision: round4(self.precision),
            recall: round4(self.recall),
            f1: round4(self.f1),
        }
    }
}

/// Correct, predicted and annotated triplet counts.
#[derive(Debug, Clone, Copy, Default, PartialEq, Eq, Serialize, Deserialize)]
pub struct TripletCounts {
    pub ct: usize,
    pub pt: usize,
    pub at: usize,
}

impl std::ops::Add for TripletCounts {
    type Output = TripletCounts;
    fn add(self, o: TripletCounts) -> TripletCounts {
        TripletCounts {
            ct: self.ct + o.ct,
            pt: self.pt + o.pt,
            at: self.at + o.at,
        }
    }
}

/// Word counts inside emotion spans (`ce`, `pe`, `ae`) and cause spans (`cc`, `pc`, `ac`).
#[derive(Debug, Clone, Copy, Default, PartialEq, Eq, Serialize, Deserialize)]
pub struct WordCounts {
    pub ce: usize,
    pub pe: usize,
    pub ae: usize,
    pub cc: usize,
    pub pc: usize,
    pub ac: usize,
}

impl std::ops::Add for WordCounts {
    type Output = WordCounts;
    fn add(self, o: WordCounts) -> WordCounts {
        WordCounts {
            ce: self.ce + o.ce,
            pe: self.pe + o.pe,
            ae: self.ae + o.ae,
            cc: self.cc + o.cc,
            pc: self.pc + o.pc,
            ac: self.ac + o.ac,
        }
    }
}

impl WordCounts {
    /// Averages the emotion and cause precisions (and recalls), then takes F1.
    pub fn scores(&self) -> Prf {
        let p_e = ratio(self.ce, self.pe);
        let r_e = ratio(self.ce, self.ae);
        let p_c = ratio(self.cc, self.pc);
        let r_c = ratio(self.cc, self.ac);
        Prf::new((p_e + p_c) / 2.0, (r_e + r_c) / 2.0)
    }
}

/// How unparseable model output lines enter the predicted-triplet count.
#[derive(Debug, Clone, Copy, Default, PartialEq, Eq, Serialize, Deserialize)]
#[serde(rename_all = "lowercase")]
pub enum MalformedPolicy {
    /// Counted separately, not part of PT.
    #[default]
    Exclude,
    /// Each malformed line counts as one wrong prediction.
    Penalize,
}

impl std::str::FromStr for MalformedPolicy {
    type Err = String;
    fn from_str(s: &str) -> Result<Self, Self::Err> {
        match s {
            "exclude" => Ok(MalformedPolicy::Exclude),
            "penalize" => Ok(MalformedPolicy::Penalize),
            other => Err(format!("unknown malformed policy {other:?} (expected exclude|penalize)")),
        }
    }
}

#[derive(Debug, Clone, Copy, Default, PartialEq, Eq, Serialize, Deserialize)]
pub struct ReportCounts {
    pub triplets: TripletCounts,
    pub words: WordCounts,
    pub cause_spans: TripletCounts,
}

#[derive(Debug, Clone, Copy, Default, PartialEq, Serialize, Deserialize)]
pub struct DisplayValues {
    pub span: Prf,
    pub word: Prf,
    pub cause_span: Prf,
}

#[derive(Debug, Clone, PartialEq, Serialize, Deserialize)]
pub struct MetricsReport {
    pub span: Prf,
    pub word: Prf,
    pub cause_span: Prf,
    pub counts: ReportCounts,
    pub per_category: BTreeMap<String, TripletCounts>,
    pub malformed_lines: usize,
    /// The three score triples rounded to 4 decimals.
    pub display: DisplayValues,
}

impl MetricsReport {
    pub fn from_counts(counts: ReportCounts, per_category: BTreeMap<String, TripletCounts>, malformed_lines: usize) -> Self {
        let span = Prf::from_counts(counts.triplets);
        let word = counts.words.scores();
        let cause_span = Prf::from_counts(counts.cause_spans);
        MetricsReport {
            span,
            word,
            cause_span,
            counts,
            per_category,
            malformed_lines,
            display: DisplayValues {
                span: span.rounded(),
                word: word.rounded(),
                cause_span: cause_span.rounded(),
            },
        }
    }

    /// A report carrying published scores without underlying counts.
    pub fn from_scores(span: Prf, word: Prf, cause_span: Prf) -> Self {
        MetricsReport {
            span,
            word,
            cause_span,
            counts: ReportCounts::default(),
            per_category: BTreeMap::new(),
            malformed_lines: 0,
            display: DisplayValues {
                span: span.rounded(),
                word: word.rounded(),
                cause_span: cause_span.rounded(),
            },
        }
    }
}

/// Differences `a - b` in percentage points, rounded to 2 decimals.
#[derive(Debug, Clone, Copy, PartialEq, Serialize, Deserialize)]
pub struct MetricsDelta {
    pub span: Prf,
    pub word: Prf,
    pub cause_span: Prf,
}

fn pp(a: f64, b: f64) -> f64 {
    let d = ((a - b) * 10_000.0).round() / 100.0;
    if d == 0.0 {
        0.0
    } else {
        d
    }
}

fn prf_delta(a: Prf, b: Prf) -> Prf {
    Prf {
        precision: pp(a.precision, b.precision),
        recall: pp(a.recall, b.recall),
        f1: pp(a.f1, b.f1),
    }
}

pub fn compare(a: &MetricsReport, b: &MetricsReport) -> MetricsDelta {
    MetricsDelta {
        span: prf_delta(a.span, b.span),
        word: prf_delta(a.word, b.word),
        cause_span: prf_delta(a.cause_span, b.cause_span),
    }
}

#[cfg(test)]
mod tests {
    use super::*;
    use approx::assert_abs_diff_eq;

    #[test]
    fn f1_values() {
        assert_abs_diff_eq!(f1(0.5268, 0.4963), 0.5107, epsilon = 0.002);
        assert_abs_diff_eq!(f1(0.4151, 0.3493), 0.3794, epsilon = 0.002);
        assert_eq!(f1(1.0, 1.0), 1.0);
        assert_eq!(f1(0.0, 0.7), 0.0);
        assert_eq!(f1(0.0, 0.0), 0.0);
    }

    #[test]
    fn zero_denominators_are_zero() {
        let p = Prf::from_counts(TripletCounts { ct: 0, pt: 0, at: 0 });
        assert_eq!(p, Prf::default());
        assert_eq!(WordCounts::default().scores(), Prf::default());
    }

    fn with_span_f1(f: f64) -> MetricsReport {
        MetricsReport::from_scores(
            Prf {
                precision: 0.0,
                recall: 0.0,
                f1: f,
            },
            Prf::default(),
            Prf::default(),
        )
    }

    #[test]
    fn compare_in_percentage_points() {
        let ours = with_span_f1(0.5107);
        assert_eq!(compare(&ours, &with_span_f1(0.3221)).span.f1, 18.86);
        assert_eq!(compare(&ours, &with_span_f1(0.3592)).span.f1, 15.15);
        assert_eq!(compare(&ours, &with_span_f1(0.3794)).span.f1, 13.13);
        let zero = compare(&ours, &ours);
        assert_eq!(zero.span, Prf::default());
        assert_eq!(zero.word, Prf::default());
    }

    #[test]
    fn report_json_has_display_rounding() {
        let counts = ReportCounts {
            triplets: TripletCounts { ct: 1, pt: 3, at: 3 },
            ..Default::default()
        };
        let r = MetricsReport::from_counts(counts, BTreeMap::new(), 0);
        let v = serde_json::to_value(&r).unwrap();
        assert_eq!(v["display"]["span"]["precision"], 0.3333);
        assert!((v["span"]["precision"].as_f64().unwrap() - 1.0 / 3.0).abs() < 1e-15);
        let back: MetricsReport = serde_json::from_value(v).unwrap();
        assert_eq!(back, r);
    }
}
