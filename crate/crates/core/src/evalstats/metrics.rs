use std::collections::HashSet;

use serde::{Deserialize, Serialize};

use crate::error::{Error, Result};

fn hits_in_top(ranking: &[usize], gold: &HashSet<usize>, k: usize) -> usize {
    ranking.iter().take(k).filter(|id| gold.contains(id)).count()
}

/// |gold ∩ top-k| / |gold|. Returns `None` for an empty gold set.
pub fn recall_at_k(ranking: &[usize], gold: &HashSet<usize>, k: usize) -> Option<f64> {
    if gold.is_empty() {
        return None;
    }
    Some(hits_in_top(ranking, gold, k) as f64 / gold.len() as f64)
}

/// |gold ∩ top-k| / k.
pub fn precision_at_k(ranking: &[usize], gold: &HashSet<usize>, k: usize) -> Option<f64> {
    if gold.is_empty() || k == 0 {
        return None;
    }
    Some(hits_in_top(ranking, gold, k) as f64 / k as f64)
}

/// Mean of precision at each gold hit rank; unretrieved gold count as 0.
pub fn average_precision(ranking: &[usize], gold: &HashSet<usize>) -> Option<f64> {
    if gold.is_empty() {
        return None;
    }
    let mut hits = 0usize;
    let mut sum = 0.0;
    for (i, id) in ranking.iter().enumerate() {
        if gold.contains(id) {
            hits += 1;
            sum += hits as f64 / (i + 1) as f64;
        }
    }
    Some(sum / gold.len() as f64)
}

/// 1 / rank of the first gold hit, 0 if nothing relevant was retrieved.
pub fn reciprocal_rank(ranking: &[usize], gold: &HashSet<usize>) -> Option<f64> {
    if gold.is_empty() {
        return None;
    }
    Some(
        ranking
            .iter()
            .position(|id| gold.contains(id))
            .map_or(0.0, |p| 1.0 / (p + 1) as f64),
    )
}

/// One evaluated query.
#[derive(Debug, Clone, PartialEq, Serialize, Deserialize)]
pub struct RunResult {
    pub qid: String,
    pub ranking: Vec<usize>,
    pub gold: HashSet<usize>,
}

/// Column set of the automatic-ranking report.
#[derive(Debug, Clone, PartialEq, Serialize, Deserialize)]
pub struct EvalReport {
    #[serde(rename = "R@10")]
    pub recall_10: f64,
    #[serde(rename = "P@1")]
    pub precision_1: f64,
    #[serde(rename = "P@4")]
    pub precision_4: f64,
    #[serde(rename = "MAP")]
    pub map: f64,
    #[serde(rename = "MRR")]
    pub mrr: f64,
    pub queries: usize,
    pub skipped: usize,
}

/// Unweighted means over queries with non-empty gold.
pub fn evaluate_run(run: &[RunResult]) -> Result<EvalReport> {
    let evaluable: Vec<&RunResult> = run.iter().filter(|r| !r.gold.is_empty()).collect();
    if evaluable.is_empty() {
        return Err(Error::NoEvaluableQueries);
    }
    let n = evaluable.len() as f64;
    let mean = |f: &dyn Fn(&RunResult) -> f64| evaluable.iter().map(|r| f(r)).sum::<f64>() / n;
    Ok(EvalReport {
        recall_10: mean(&|r| recall_at_k(&r.ranking, &r.gold, 10).unwrap()),
        precision_1: mean(&|r| precision_at_k(&r.ranking, &r.gold, 1).unwrap()),
        precision_4: mean(&|r| precision_at_k(&r.ranking, &r.gold, 4).unwrap()),
        map: mean(&|r| average_precision(&r.ranking, &r.gold).unwrap()),
        mrr: mean(&|r| reciprocal_rank(&r.ranking, &r.gold).unwrap()),
        queries: evaluable.len(),
        skipped: run.len() - evaluable.len(),
    })
}

#[cfg(test)]
mod tests {
    use super::*;
    use proptest::prelude::*;

    fn g(ids: &[usize]) -> HashSet<usize> {
        ids.iter().copied().collect()
    }

    #[test]
    fn recall_examples() {
        let ranking: Vec<usize> = (0..20).collect();
        assert_eq!(recall_at_k(&ranking, &g(&[3, 15]), 10), Some(0.5));
        assert_eq!(recall_at_k(&ranking, &g(&[3, 5]), 10), Some(1.0));
        assert_eq!(recall_at_k(&ranking, &g(&[3]), 0), Some(0.0));
        assert_eq!(recall_at_k(&ranking, &g(&[]), 10), None);
    }

    #[test]
    fn precision_examples() {
        assert_eq!(precision_at_k(&[9, 1, 2, 3], &g(&[2]), 4), Some(0.25));
        assert_eq!(precision_at_k(&[2, 1], &g(&[2]), 1), Some(1.0));
        assert_eq!(precision_at_k(&[1, 3], &g(&[2]), 2), Some(0.0));
    }

    #[test]
    fn average_precision_examples() {
        let ap = average_precision(&[1, 9, 2, 8], &g(&[1, 2])).unwrap();
        assert!((ap - 5.0 / 6.0).abs() < 1e-15);
        assert_eq!(average_precision(&[2, 1, 7], &g(&[1, 2])), Some(1.0));
        assert_eq!(average_precision(&[7, 8], &g(&[1, 2])), Some(0.0));
    }

    #[test]
    fn reciprocal_rank_examples() {
        assert_eq!(reciprocal_rank(&[5, 6, 1], &g(&[1])), Some(1.0 / 3.0));
        assert_eq!(reciprocal_rank(&[1], &g(&[1])), Some(1.0));
        assert_eq!(reciprocal_rank(&[4], &g(&[1])), Some(0.0));
    }

    #[test]
    fn single_perfect_query() {
        let r = evaluate_run(&[RunResult {
            qid: "q".into(),
            ranking: vec![7, 1, 2, 3, 4],
            gold: g(&[7]),
        }])
        .unwrap();
        assert_eq!((r.recall_10, r.precision_1, r.precision_4, r.map, r.mrr), (1.0, 1.0, 0.25, 1.0, 1.0));
    }

    #[test]
    fn no_evaluable_queries_is_an_error() {
        let run = [RunResult { qid: "q".into(), ranking: vec![1], gold: g(&[]) }];
        assert!(matches!(evaluate_run(&run), Err(Error::NoEvaluableQueries)));
    }

    proptest! {
        #[test]
        fn metric_bounds_and_monotonicity(
            ranking in prop::collection::vec(0usize..30, 0..20),
            gold in prop::collection::hash_set(0usize..30, 1..6),
        ) {
            let mut seen = HashSet::new();
            let ranking: Vec<usize> = ranking.into_iter().filter(|x| seen.insert(*x)).collect();
            let mut last = 0.0;
            for k in 0..=ranking.len() + 1 {
                let r = recall_at_k(&ranking, &gold, k).unwrap();
                prop_assert!((0.0..=1.0).contains(&r));
                prop_assert!(r >= last);
                last = r;
                if k >= 1 {
                    let p = precision_at_k(&ranking, &gold, k).unwrap();
                    prop_assert_eq!((p * k as f64).round() as usize, hits_in_top(&ranking, &gold, k));
                }
            }
            let ap = average_precision(&ranking, &gold).unwrap();
            prop_assert!((0.0..=1.0).contains(&ap));
            let top_is_gold = ranking.len() >= gold.len()
                && ranking[..gold.len()].iter().all(|x| gold.contains(x));
            prop_assert_eq!(ap == 1.0, top_is_gold);
        }
    }
}
