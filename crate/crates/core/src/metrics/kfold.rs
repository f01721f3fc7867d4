use std::collections::{HashMap, HashSet};
use std::fmt::Write as _;

use rand::seq::SliceRandom;
use rand::SeedableRng;
use rand_chacha::ChaCha8Rng;
use serde::{Deserialize, Serialize};

use super::{MetricsReport, Prf, ReportCounts};

#[derive(Debug, Clone, PartialEq, Eq, thiserror::Error)]
pub enum KFoldError {
    #[error("k must be at least 2, got {0}")]
    KTooSmall(usize),
    #[error("k = {k} exceeds the number of documents ({n})")]
    KTooLarge { k: usize, n: usize },
    #[error("duplicate document id {0:?}")]
    DuplicateId(String),
    #[error("no fold reports to aggregate")]
    NoReports,
}

/// Fold assignment of document ids: shuffled with a seeded ChaCha8 stream,
/// then dealt round-robin so fold sizes differ by at most one.
#[derive(Debug, Clone, PartialEq, Eq, Serialize, Deserialize)]
pub struct FoldPlan {
    pub k: usize,
    pub seed: u64,
    /// `(id, fold)` in original corpus order.
    pub assignments: Vec<(String, usize)>,
}

pub fn kfold_split<S: AsRef<str>>(ids: &[S], k: usize, seed: u64) -> Result<FoldPlan, KFoldError> {
    if k < 2 {
        return Err(KFoldError::KTooSmall(k));
    }
    if k > ids.len() {
        return Err(KFoldError::KTooLarge { k, n: ids.len() });
    }
    let mut seen = HashSet::new();
    for id in ids {
        if !seen.insert(id.as_ref()) {
            return Err(KFoldError::DuplicateId(id.as_ref().to_string()));
        }
    }
    let mut order: Vec<usize> = (0..ids.len()).collect();
    order.shuffle(&mut ChaCha8Rng::seed_from_u64(seed));
    let mut fold = vec![0; ids.len()];
    for (pos, &idx) in order.iter().enumerate() {
        fold[idx] = pos % k;
    }
    Ok(FoldPlan {
        k,
        seed,
        assignments: ids.iter().zip(fold).map(|(id, f)| (id.as_ref().to_string(), f)).collect(),
    })
}

impl FoldPlan {
    pub fn fold_of(&self, id: &str) -> Option<usize> {
        self.assignments.iter().find(|(i, _)| i == id).map(|(_, f)| *f)
    }

    pub fn test_ids(&self, fold: usize) -> Vec<&str> {
        self.assignments
            .iter()
            .filter(|(_, f)| *f == fold)
            .map(|(i, _)| i.as_str())
            .collect()
    }

    pub fn train_ids(&self, fold: usize) -> Vec<&str> {
        self.assignments
            .iter()
            .filter(|(_, f)| *f != fold)
            .map(|(i, _)| i.as_str())
            .collect()
    }

    pub fn fold_sizes(&self) -> Vec<usize> {
        let mut sizes = vec![0; self.k];
        for (_, f) in &self.assignments {
            sizes[*f] += 1;
        }
        sizes
    }

    /// `(train, test)` views of `items` for `fold`, keyed by `id_of`. Items
    /// whose id is not in the plan are left out of both sides.
    pub fn split<'a, T, F>(&self, items: &'a [T], fold: usize, id_of: F) -> (Vec<&'a T>, Vec<&'a T>)
    where
        F: Fn(&T) -> &str,
    {
        let index: HashMap<&str, usize> = self.assignments.iter().map(|(i, f)| (i.as_str(), *f)).collect();
        let mut train = Vec::new();
        let mut test = Vec::new();
        for it in items {
            match index.get(id_of(it)) {
                Some(&f) if f == fold => test.push(it),
                Some(_) => train.push(it),
                None => {}
            }
        }
        (train, test)
    }
}

#[derive(Debug, Clone, Copy, Default, PartialEq, Eq, Serialize, Deserialize)]
#[serde(rename_all = "lowercase")]
pub enum Aggregation {
    /// Unweighted mean of per-fold P, R and F1.
    #[default]
    Mean,
    /// Scores recomputed from counts summed over folds.
    Micro,
}

impl std::str::FromStr for Aggregation {
    type Err = String;
    fn from_str(s: &str) -> Result<Self, Self::Err> {
        match s {
            "mean" => Ok(Aggregation::Mean),
            "micro" => Ok(Aggregation::Micro),
            other => Err(format!("unknown aggregation {other:?} (expected mean|micro)")),
        }
    }
}

#[derive(Debug, Clone, Copy, Default, PartialEq, Serialize, Deserialize)]
pub struct Headline {
    pub span: Prf,
    pub word: Prf,
    pub cause_span: Prf,
}

#[derive(Debug, Clone, PartialEq, Serialize, Deserialize)]
pub struct FoldSummary {
    pub folds: usize,
    pub headline_aggregation: Aggregation,
    pub headline: Headline,
    pub mean: Headline,
    pub micro: Headline,
    pub per_fold: Vec<MetricsReport>,
}

fn mean_prf(rows: impl Iterator<Item = Prf>, n: f64) -> Prf {
    let mut acc = Prf::default();
    for r in rows {
        acc.precision += r.precision;
        acc.recall += r.recall;
        acc.f1 += r.f1;
    }
    Prf {
        precision: acc.precision / n,
        recall: acc.recall / n,
        f1: acc.f1 / n,
    }
}

pub fn aggregate_folds(reports: &[MetricsReport], headline: Aggregation) -> Result<FoldSummary, KFoldError> {
    if reports.is_empty() {
        return Err(KFoldError::NoReports);
    }
    let n = reports.len() as f64;
    let mean = Headline {
        span: mean_prf(reports.iter().map(|r| r.span), n),
        word: mean_prf(reports.iter().map(|r| r.word), n),
        cause_span: mean_prf(reports.iter().map(|r| r.cause_span), n),
    };
    let total = reports.iter().fold(ReportCounts::default(), |a, r| ReportCounts {
        triplets: a.triplets + r.counts.triplets,
        words: a.words + r.counts.words,
        cause_spans: a.cause_spans + r.counts.cause_spans,
    });
    let micro = Headline {
        span: Prf::from_counts(total.triplets),
        word: total.words.scores(),
        cause_span: Prf::from_counts(total.cause_spans),
    };
    Ok(FoldSummary {
        folds: reports.len(),
        headline_aggregation: headline,
        headline: match headline {
            Aggregation::Mean => mean,
            Aggregation::Micro => micro,
        },
        mean,
        micro,
        per_fold: reports.to_vec(),
    })
}

/// One CSV row per fold report, full precision.
pub fn fold_csv(reports: &[MetricsReport]) -> String {
    let mut out = String::from(
        "fold,ct,pt,at,span_p,span_r,span_f1,word_p,word_r,word_f1,cause_p,cause_r,cause_f1,malformed_lines\n",
    );
    for (i, r) in reports.iter().enumerate() {
        let t = r.counts.triplets;
        let _ = writeln!(
            out,
            "{i},{},{},{},{},{},{},{},{},{},{},{},{},{}",
            t.ct,
            t.pt,
            t.at,
            r.span.precision,
            r.span.recall,
            r.span.f1,
            r.word.precision,
            r.word.recall,
            r.word.f1,
            r.cause_span.precision,
            r.cause_span.recall,
            r.cause_span.f1,
            r.malformed_lines
        );
    }
    out
}

#[cfg(test)]
mod tests {
    use super::*;
    use crate::metrics::TripletCounts;
    use proptest::prelude::*;
    use std::collections::BTreeMap;

    fn ids(n: usize) -> Vec<String> {
        (0..n).map(|i| format!("doc-{i}")).collect()
    }

    #[test]
    fn errors() {
        assert_eq!(kfold_split(&ids(5), 1, 0), Err(KFoldError::KTooSmall(1)));
        assert_eq!(kfold_split(&ids(5), 6, 0), Err(KFoldError::KTooLarge { k: 6, n: 5 }));
        assert_eq!(
            kfold_split(&["a", "b", "a"], 2, 0),
            Err(KFoldError::DuplicateId("a".into()))
        );
        assert_eq!(aggregate_folds(&[], Aggregation::Mean), Err(KFoldError::NoReports));
    }

    #[test]
    fn same_seed_same_plan_different_seed_differs() {
        let a = kfold_split(&ids(40), 10, 7).unwrap();
        assert_eq!(a, kfold_split(&ids(40), 10, 7).unwrap());
        assert_ne!(a, kfold_split(&ids(40), 10, 8).unwrap());
    }

    #[test]
    fn split_views() {
        let items = ids(12);
        let plan = kfold_split(&items, 3, 1).unwrap();
        let (train, test) = plan.split(&items, 0, |s| s.as_str());
        assert_eq!(train.len() + test.len(), 12);
        assert_eq!(test.len(), 4);
        assert!(test.iter().all(|id| plan.fold_of(id) == Some(0)));
    }

    fn report(ct: usize, pt: usize, at: usize) -> MetricsReport {
        MetricsReport::from_counts(
            ReportCounts {
                triplets: TripletCounts { ct, pt, at },
                ..Default::default()
            },
            BTreeMap::new(),
            0,
        )
    }

    #[test]
    fn mean_versus_micro() {
        let reports = [report(1, 1, 1), report(0, 9, 9)];
        let s = aggregate_folds(&reports, Aggregation::Mean).unwrap();
        assert_eq!(s.mean.span.precision, 0.5);
        assert_eq!(s.mean.span.f1, 0.5);
        assert_eq!(s.micro.span.precision, 0.1);
        assert_eq!(s.headline, s.mean);
        let m = aggregate_folds(&reports, Aggregation::Micro).unwrap();
        assert_eq!(m.headline, m.micro);
        let csv = fold_csv(&reports);
        assert_eq!(csv.lines().count(), 3);
        assert!(csv.lines().nth(1).unwrap().starts_with("0,1,1,1,1,1,1,"));
    }

    proptest! {
        #![proptest_config(ProptestConfig::with_cases(200))]

        #[test]
        fn folds_partition_and_balance(n in 2usize..80, k in 2usize..12, seed: u64) {
            prop_assume!(k <= n);
            let list = ids(n);
            let plan = kfold_split(&list, k, seed).unwrap();
            let sizes = plan.fold_sizes();
            prop_assert_eq!(sizes.iter().sum::<usize>(), n);
            let (lo, hi) = (sizes.iter().min().unwrap(), sizes.iter().max().unwrap());
            prop_assert!(hi - lo <= 1);
            let mut all: Vec<&str> = (0..k).flat_map(|f| plan.test_ids(f)).collect();
            all.sort();
            let mut expected: Vec<&str> = list.iter().map(String::as_str).collect();
            expected.sort();
            prop_assert_eq!(all, expected);
            for f in 0..k {
                prop_assert_eq!(plan.test_ids(f).len() + plan.train_ids(f).len(), n);
            }
        }
    }
}
