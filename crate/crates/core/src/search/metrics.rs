//! Retrieval quality metrics over per-query result lists.

use std::collections::HashSet;

use crate::data::GroundTruth;
use crate::error::{Error, Result};

use super::SearchResult;

/// Mean over queries of `|top-r retrieved ∩ top-t true| / t`.
///
/// `t` picks how many true neighbors count as targets, `r` how deep into the
/// retrieved list to look. Always in `[0, 1]` and nondecreasing in `r`.
pub fn recall_at_r(
    results: &[SearchResult],
    gt: &GroundTruth,
    t: usize,
    r: usize,
) -> Result<f64> {
    if results.len() != gt.n_queries() {
        return Err(Error::invalid(format!(
            "{} result lists for {} ground-truth queries",
            results.len(),
            gt.n_queries()
        )));
    }
    if t == 0 || t > gt.depth() {
        return Err(Error::invalid(format!("t={t} outside 1..={}", gt.depth())));
    }
    if r == 0 {
        return Err(Error::invalid("r must be at least 1"));
    }
    let mut total = 0.0;
    for (q, res) in results.iter().enumerate() {
        let relevant: HashSet<u32> = gt.row(q)[..t].iter().copied().collect();
        let depth = r.min(res.ids.len());
        let hits = res.ids[..depth].iter().filter(|id| relevant.contains(id)).count();
        total += hits as f64 / t as f64;
    }
    Ok(total / results.len() as f64)
}

/// Mean average precision with the `t_relevant` nearest true neighbors as the
/// relevant set.
///
/// Per query, `AP = Σ_t P(t)·Δ(t)` where `P(t)` is precision at cutoff `t`
/// and `Δ(t)` is the recall gained at rank `t` (`1/t_relevant` on a hit, else
/// 0). Lists are scored as given, without truncation.
pub fn mean_average_precision(
    results: &[SearchResult],
    gt: &GroundTruth,
    t_relevant: usize,
) -> Result<f64> {
    if results.len() != gt.n_queries() {
        return Err(Error::invalid(format!(
            "{} result lists for {} ground-truth queries",
            results.len(),
            gt.n_queries()
        )));
    }
    if t_relevant == 0 || t_relevant > gt.depth() {
        return Err(Error::invalid(format!("t_relevant={t_relevant} outside 1..={}", gt.depth())));
    }
    let mut total = 0.0;
    for (q, res) in results.iter().enumerate() {
        let relevant: HashSet<u32> = gt.row(q)[..t_relevant].iter().copied().collect();
        let mut hits = 0usize;
        let mut ap = 0.0;
        for (rank0, id) in res.ids.iter().enumerate() {
            if relevant.contains(id) {
                hits += 1;
                ap += hits as f64 / (rank0 + 1) as f64;
            }
        }
        total += ap / t_relevant as f64;
    }
    Ok(total / results.len() as f64)
}

#[cfg(test)]
mod tests {
    use super::*;
    use rand::Rng;

    fn result(ids: Vec<u32>) -> SearchResult {
        let scores = (0..ids.len()).map(|i| i as f64).collect();
        SearchResult { ids, scores, clipped: false }
    }

    #[test]
    fn recall_handles_perfect_and_disjoint_results() {
        let gt = GroundTruth::new(vec![vec![0, 1, 2], vec![3, 4, 5]]).unwrap();
        let perfect = vec![result(vec![0, 1, 2]), result(vec![3, 4, 5])];
        assert_eq!(recall_at_r(&perfect, &gt, 3, 3).unwrap(), 1.0);
        let disjoint = vec![result(vec![7, 8, 9]), result(vec![7, 8, 9])];
        assert_eq!(recall_at_r(&disjoint, &gt, 3, 3).unwrap(), 0.0);
        // Half the targets found for query 0, all for query 1.
        let mixed = vec![result(vec![0, 9]), result(vec![3, 4])];
        assert_eq!(recall_at_r(&mixed, &gt, 2, 2).unwrap(), 0.75);
    }

    #[test]
    fn recall_matches_independent_set_intersection_and_is_monotone_in_r() {
        let mut rng = crate::rng::stream_rng(1, "metrics-test");
        let gt = GroundTruth::new(
            (0..8)
                .map(|_| {
                    let mut ids: Vec<u32> = (0..20).collect();
                    for i in (1..ids.len()).rev() {
                        ids.swap(i, rng.random_range(0..=i));
                    }
                    ids.truncate(10);
                    ids
                })
                .collect(),
        )
        .unwrap();
        let results: Vec<SearchResult> = (0..8)
            .map(|_| {
                let mut ids: Vec<u32> = (0..20).collect();
                for i in (1..ids.len()).rev() {
                    ids.swap(i, rng.random_range(0..=i));
                }
                ids.truncate(12);
                result(ids)
            })
            .collect();

        let mut last = 0.0;
        for r in 1..=12 {
            let got = recall_at_r(&results, &gt, 5, r).unwrap();
            // Oracle: literal double loop.
            let mut expect = 0.0;
            for q in 0..8 {
                let mut hits = 0;
                for id in &results[q].ids[..r.min(results[q].ids.len())] {
                    if gt.row(q)[..5].contains(id) {
                        hits += 1;
                    }
                }
                expect += hits as f64 / 5.0;
            }
            expect /= 8.0;
            assert!((got - expect).abs() < 1e-15);
            assert!((0.0..=1.0).contains(&got));
            assert!(got >= last - 1e-15, "recall decreased in r");
            last = got;
        }
    }

    #[test]
    fn recall_rejects_bad_cutoffs() {
        let gt = GroundTruth::new(vec![vec![0, 1]]).unwrap();
        let res = vec![result(vec![0])];
        assert!(recall_at_r(&res, &gt, 0, 1).is_err());
        assert!(recall_at_r(&res, &gt, 3, 1).is_err());
        assert!(recall_at_r(&res, &gt, 1, 0).is_err());
        assert!(recall_at_r(&[], &gt, 1, 1).is_err());
    }

    #[test]
    fn map_scores_textbook_cases() {
        // All relevant items first: AP is exactly 1.
        let gt = GroundTruth::new(vec![vec![4, 2, 7]]).unwrap();
        let res = vec![result(vec![2, 7, 4, 0, 1])];
        assert!((mean_average_precision(&res, &gt, 3).unwrap() - 1.0).abs() < 1e-15);

        // One relevant item ranked second of two: P(2)=1/2, Δ(2)=1 → 0.5.
        let gt = GroundTruth::new(vec![vec![9]]).unwrap();
        let res = vec![result(vec![5, 9])];
        assert!((mean_average_precision(&res, &gt, 1).unwrap() - 0.5).abs() < 1e-15);
    }

    #[test]
    fn map_matches_a_literal_precision_recall_sum() {
        let mut rng = crate::rng::stream_rng(2, "metrics-test-map");
        for trial in 0..20 {
            let mut ids: Vec<u32> = (0..10).collect();
            for i in (1..ids.len()).rev() {
                ids.swap(i, rng.random_range(0..=i));
            }
            let gt = GroundTruth::new(vec![(0..4).map(|i| i * 2).collect()]).unwrap();
            let res = vec![result(ids.clone())];
            let got = mean_average_precision(&res, &gt, 4).unwrap();

            // Oracle: Σ_t P(t)·Δ(t) written out directly.
            let relevant: Vec<u32> = (0..4).map(|i| i * 2).collect();
            let mut expect = 0.0;
            let mut prev_recall = 0.0;
            for t in 1..=ids.len() {
                let hits = ids[..t].iter().filter(|i| relevant.contains(i)).count();
                let p = hits as f64 / t as f64;
                let recall = hits as f64 / 4.0;
                expect += p * (recall - prev_recall);
                prev_recall = recall;
            }
            assert!((got - expect).abs() < 1e-12, "trial {trial}: {got} vs {expect}");
        }
    }
}
