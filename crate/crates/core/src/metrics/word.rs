use std::collections::HashMap;

use super::{Prf, WordCounts};
use crate::codec::TripletCandidate;

pub trait Tokenizer: Send + Sync {
    fn tokenize(&self, text: &str) -> Vec<String>;
}

#[derive(Debug, Clone, Copy, Default)]
pub struct WhitespaceTokenizer;

impl Tokenizer for WhitespaceTokenizer {
    fn tokenize(&self, text: &str) -> Vec<String> {
        text.split_whitespace().map(str::to_string).collect()
    }
}

/// One token per non-whitespace character.
#[derive(Debug, Clone, Copy, Default)]
pub struct CharTokenizer;

impl Tokenizer for CharTokenizer {
    fn tokenize(&self, text: &str) -> Vec<String> {
        text.chars().filter(|c| !c.is_whitespace()).map(String::from).collect()
    }
}

/// Whitespace tokens, or per-character tokens for a span that has no
/// whitespace and contains CJK script.
#[derive(Debug, Clone, Copy, Default)]
pub struct DefaultTokenizer;

fn is_cjk(c: char) -> bool {
    matches!(c as u32,
        0x3040..=0x30FF
        | 0x3400..=0x4DBF
        | 0x4E00..=0x9FFF
        | 0xAC00..=0xD7AF
        | 0xF900..=0xFAFF
        | 0x20000..=0x2FA1F)
}

impl Tokenizer for DefaultTokenizer {
    fn tokenize(&self, text: &str) -> Vec<String> {
        let trimmed = text.trim();
        if !trimmed.chars().any(char::is_whitespace) && trimmed.chars().any(is_cjk) {
            CharTokenizer.tokenize(trimmed)
        } else {
            WhitespaceTokenizer.tokenize(trimmed)
        }
    }
}

/// Token counts for one span's text.
pub fn span_words(tokenizer: &dyn Tokenizer, text: &str) -> HashMap<String, usize> {
    let mut m = HashMap::new();
    for t in tokenizer.tokenize(text) {
        *m.entry(t).or_insert(0) += 1;
    }
    m
}

fn overlap(a: &HashMap<String, usize>, b: &HashMap<String, usize>) -> usize {
    a.iter().map(|(k, n)| (*n).min(b.get(k).copied().unwrap_or(0))).sum()
}

fn total(m: &HashMap<String, usize>) -> usize {
    m.values().sum()
}

/// Word-level overlap between predicted and gold triplets of one document.
///
/// Each prediction is aligned with at most one gold triplet of the same
/// category. Alignment is greedy on combined emotion+cause token overlap,
/// largest first, ties broken by gold index, then by the prediction's sorted
/// emotion and cause word lists (smallest first) so that reordering
/// predictions or their words never changes the counts.
pub fn word_metrics(pred: &[TripletCandidate], gold: &[TripletCandidate], tokenizer: &dyn Tokenizer) -> (WordCounts, Prf) {
    let tok = |t: &TripletCandidate| (span_words(tokenizer, &t.emotion), span_words(tokenizer, &t.cause));
    let pw: Vec<_> = pred.iter().map(tok).collect();
    let gw: Vec<_> = gold.iter().map(tok).collect();
    fn sorted(m: &HashMap<String, usize>) -> Vec<&str> {
        let mut v: Vec<&str> = m.iter().flat_map(|(w, n)| std::iter::repeat_n(w.as_str(), *n)).collect();
        v.sort_unstable();
        v
    }
    let pkey: Vec<_> = pw
        .iter()
        .zip(pred)
        .map(|((e, c), t)| (sorted(e), sorted(c), t.category.clone()))
        .collect();

    let mut counts = WordCounts {
        pe: pw.iter().map(|(e, _)| total(e)).sum(),
        pc: pw.iter().map(|(_, c)| total(c)).sum(),
        ae: gw.iter().map(|(e, _)| total(e)).sum(),
        ac: gw.iter().map(|(_, c)| total(c)).sum(),
        ..Default::default()
    };

    let mut pairs = Vec::new();
    for (gi, g) in gold.iter().enumerate() {
        for (pi, p) in pred.iter().enumerate() {
            if p.category != g.category {
                continue;
            }
            let oe = overlap(&pw[pi].0, &gw[gi].0);
            let oc = overlap(&pw[pi].1, &gw[gi].1);
            if oe + oc > 0 {
                pairs.push((oe + oc, gi, pi, oe, oc));
            }
        }
    }
    pairs.sort_by(|a, b| {
        b.0.cmp(&a.0)
            .then(a.1.cmp(&b.1))
            .then_with(|| pkey[a.2].cmp(&pkey[b.2]))
            .then(a.2.cmp(&b.2))
    });
    let mut gold_used = vec![false; gold.len()];
    let mut pred_used = vec![false; pred.len()];
    for (_, gi, pi, oe, oc) in pairs {
        if gold_used[gi] || pred_used[pi] {
            continue;
        }
        gold_used[gi] = true;
        pred_used[pi] = true;
        counts.ce += oe;
        counts.cc += oc;
    }
    (counts, counts.scores())
}

#[cfg(test)]
mod tests {
    use super::*;
    use crate::corpus::{Category, EmotionCategory};
    use proptest::prelude::*;

    fn c(e: &str, cause: &str, k: EmotionCategory) -> TripletCandidate {
        TripletCandidate {
            emotion: e.into(),
            cause: cause.into(),
            category: Category::from(k),
        }
    }

    #[test]
    fn tokenizer_rules() {
        assert_eq!(DefaultTokenizer.tokenize("of spending the night"), ["of", "spending", "the", "night"]);
        assert_eq!(DefaultTokenizer.tokenize("高兴"), ["高", "兴"]);
        assert_eq!(DefaultTokenizer.tokenize("happy"), ["happy"]);
        assert_eq!(DefaultTokenizer.tokenize("看到 孩子"), ["看到", "孩子"]);
        assert!(DefaultTokenizer.tokenize("   ").is_empty());
    }

    #[test]
    fn partial_overlap_by_hand() {
        // gold: emotion 1 word, cause 5 words; pred: emotion exact, cause 4 words sharing 3
        let gold = [c("afraid", "of spending the night alone", EmotionCategory::Fear)];
        let pred = [c("afraid", "spending the night outside", EmotionCategory::Fear)];
        let (n, s) = word_metrics(&pred, &gold, &DefaultTokenizer);
        assert_eq!(n, WordCounts { ce: 1, pe: 1, ae: 1, cc: 3, pc: 4, ac: 5 });
        let p = (1.0 + 3.0 / 4.0) / 2.0;
        let r = (1.0 + 3.0 / 5.0) / 2.0;
        assert!((s.precision - p).abs() < 1e-12);
        assert!((s.recall - r).abs() < 1e-12);
        assert!((s.f1 - 2.0 * p * r / (p + r)).abs() < 1e-12);
    }

    #[test]
    fn different_category_gets_no_credit() {
        let gold = [c("moved", "act of bravery", EmotionCategory::Happiness)];
        let pred = [c("moved", "act of bravery", EmotionCategory::Sadness)];
        let (n, s) = word_metrics(&pred, &gold, &DefaultTokenizer);
        assert_eq!((n.ce, n.cc), (0, 0));
        assert_eq!(s, Prf::default());
    }

    #[test]
    fn each_gold_aligned_once() {
        let gold = [c("happy", "home", EmotionCategory::Happiness)];
        let pred = [
            c("happy", "home", EmotionCategory::Happiness),
            c("happy", "home", EmotionCategory::Happiness),
        ];
        let (n, _) = word_metrics(&pred, &gold, &DefaultTokenizer);
        assert_eq!(n, WordCounts { ce: 1, pe: 2, ae: 1, cc: 1, pc: 2, ac: 1 });
    }

    #[test]
    fn greedy_prefers_larger_overlap() {
        let gold = [
            c("a", "x y", EmotionCategory::Surprise),
            c("a", "x y z", EmotionCategory::Surprise),
        ];
        let pred = [c("a", "x y z", EmotionCategory::Surprise)];
        let (n, _) = word_metrics(&pred, &gold, &WhitespaceTokenizer);
        assert_eq!((n.ce, n.cc), (1, 3));
    }

    fn arb_cand() -> impl Strategy<Value = TripletCandidate> {
        (
            proptest::collection::vec(0..4u8, 1..3),
            proptest::collection::vec(0..4u8, 1..4),
            0..2usize,
        )
            .prop_map(|(e, k, cat)| {
                let words = |v: Vec<u8>| v.iter().map(|w| format!("w{w}")).collect::<Vec<_>>().join(" ");
                c(&words(e), &words(k), EmotionCategory::ALL[cat])
            })
    }

    proptest! {
        #![proptest_config(ProptestConfig::with_cases(300))]

        #[test]
        fn bounded_and_exact_is_perfect(
            pred in proptest::collection::vec(arb_cand(), 0..5),
            gold in proptest::collection::vec(arb_cand(), 0..5),
        ) {
            let (n, s) = word_metrics(&pred, &gold, &DefaultTokenizer);
            prop_assert!(n.ce <= n.pe.min(n.ae));
            prop_assert!(n.cc <= n.pc.min(n.ac));
            for v in [s.precision, s.recall, s.f1] {
                prop_assert!((0.0..=1.0).contains(&v));
            }
            if !gold.is_empty() {
                let (_, own) = word_metrics(&gold, &gold, &DefaultTokenizer);
                prop_assert_eq!(own, Prf::new(1.0, 1.0));
            }
        }

        #[test]
        fn invariant_under_prediction_order_and_word_order(
            pred in proptest::collection::vec(arb_cand(), 0..6),
            gold in proptest::collection::vec(arb_cand(), 0..6),
            rot in 0..6usize,
        ) {
            let (base, _) = word_metrics(&pred, &gold, &DefaultTokenizer);
            let mut shuffled = pred.clone();
            shuffled.reverse();
            if !shuffled.is_empty() {
                let n = rot % shuffled.len();
                shuffled.rotate_left(n);
            }
            prop_assert_eq!(word_metrics(&shuffled, &gold, &DefaultTokenizer).0, base);
            let flip = |t: &TripletCandidate| {
                let rev = |s: &str| s.split(' ').rev().collect::<Vec<_>>().join(" ");
                TripletCandidate {
                    emotion: rev(&t.emotion),
                    cause: rev(&t.cause),
                    category: t.category.clone(),
                }
            };
            let reversed: Vec<_> = pred.iter().map(flip).collect();
            prop_assert_eq!(word_metrics(&reversed, &gold, &DefaultTokenizer).0, base);
        }
    }
}
