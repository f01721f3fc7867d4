use std::collections::{BTreeMap, HashMap};
use std::hash::Hash;

use super::{Prf, TripletCounts};
use crate::codec::TripletCandidate;

fn multiset<T: Eq + Hash, I: IntoIterator<Item = T>>(items: I) -> HashMap<T, usize> {
    let mut m = HashMap::new();
    for it in items {
        *m.entry(it).or_insert(0) += 1;
    }
    m
}

fn intersection<T: Eq + Hash>(a: &HashMap<T, usize>, b: &HashMap<T, usize>) -> usize {
    a.iter().map(|(k, n)| (*n).min(b.get(k).copied().unwrap_or(0))).sum()
}

/// Exact span-level matching: a prediction is correct when both span texts
/// and the category equal an unmatched gold triplet. Duplicates match at most
/// as often as they occur on both sides.
pub fn span_metrics(pred: &[TripletCandidate], gold: &[TripletCandidate]) -> (TripletCounts, Prf) {
    let p = multiset(pred.iter());
    let g = multiset(gold.iter());
    let counts = TripletCounts {
        ct: intersection(&p, &g),
        pt: pred.len(),
        at: gold.len(),
    };
    (counts, Prf::from_counts(counts))
}

/// Per-category breakdown of [`span_metrics`], keyed by category label.
pub fn span_matches(pred: &[TripletCandidate], gold: &[TripletCandidate]) -> BTreeMap<String, TripletCounts> {
    let mut out: BTreeMap<String, TripletCounts> = BTreeMap::new();
    for t in pred {
        out.entry(t.category.as_str().to_string()).or_default().pt += 1;
    }
    for t in gold {
        out.entry(t.category.as_str().to_string()).or_default().at += 1;
    }
    let p = multiset(pred.iter());
    let g = multiset(gold.iter());
    for (k, n) in &p {
        let m = (*n).min(g.get(k).copied().unwrap_or(0));
        if m > 0 {
            out.entry(k.category.as_str().to_string()).or_default().ct += m;
        }
    }
    out
}

/// Exact matching over cause span texts alone.
pub fn cause_span_metrics(pred: &[&str], gold: &[&str]) -> (TripletCounts, Prf) {
    let p = multiset(pred.iter().copied());
    let g = multiset(gold.iter().copied());
    let counts = TripletCounts {
        ct: intersection(&p, &g),
        pt: pred.len(),
        at: gold.len(),
    };
    (counts, Prf::from_counts(counts))
}
