//! Lloyd's algorithm with k-means++ seeding.

use ndarray::{Array2, ArrayView1, ArrayView2};
use rand::Rng;
use rayon::prelude::*;

use crate::error::{Error, Result};
use crate::rng::stream_rng;

/// Output of [`kmeans`]. `assignments[i]` is the nearest center of row `i`
/// under squared Euclidean distance (ties toward the lower center index) and
/// `error` is the summed squared distance of every row to its center.
#[derive(Debug, Clone)]
pub struct KMeansResult {
    pub centers: Array2<f64>,
    pub assignments: Vec<u32>,
    pub error: f64,
}

fn sq_dist(a: ArrayView1<f64>, b: ArrayView1<f64>) -> f64 {
    a.iter().zip(b.iter()).map(|(x, y)| (x - y) * (x - y)).sum()
}

fn nearest_center(x: ArrayView1<f64>, centers: &Array2<f64>) -> (u32, f64) {
    let mut best = (0u32, f64::INFINITY);
    for (c, center) in centers.rows().into_iter().enumerate() {
        let d = sq_dist(x, center);
        if d < best.1 {
            best = (c as u32, d);
        }
    }
    best
}

/// Clusters `data` into `k` groups.
///
/// Seeding is k-means++; afterwards at most `max_iters` Lloyd iterations run,
/// stopping early once assignments stabilize. A cluster that loses all its
/// points is repaired by stealing the point currently farthest from its own
/// center. Identical inputs give identical results for any thread count.
pub fn kmeans(data: ArrayView2<f64>, k: usize, max_iters: usize, seed: u64) -> Result<KMeansResult> {
    let n = data.nrows();
    let d = data.ncols();
    if n == 0 || d == 0 {
        return Err(Error::invalid("kmeans needs a non-empty matrix"));
    }
    if k == 0 || k > n {
        return Err(Error::invalid(format!("k must be in 1..={n}, got {k}")));
    }
    let mut rng = stream_rng(seed, "kmeans");
    let mut centers = seed_plus_plus(data, k, &mut rng);
    let mut assignments: Vec<u32> = vec![0; n];
    for _ in 0..max_iters.max(1) {
        let next: Vec<u32> = (0..n)
            .into_par_iter()
            .map(|i| nearest_center(data.row(i), &centers).0)
            .collect();
        let mut next = next;
        repair_empty_clusters(data, &centers, &mut next, k);
        let changed = next != assignments;
        assignments = next;

        let mut sums = Array2::<f64>::zeros((k, d));
        let mut counts = vec![0usize; k];
        for (i, &a) in assignments.iter().enumerate() {
            counts[a as usize] += 1;
            let mut row = sums.row_mut(a as usize);
            row += &data.row(i);
        }
        for c in 0..k {
            if counts[c] > 0 {
                let mut row = centers.row_mut(c);
                row.assign(&(&sums.row(c) / counts[c] as f64));
            }
        }
        if !changed {
            break;
        }
    }
    // Final pass keeps the published assignments consistent with the
    // published centers.
    let scored: Vec<(u32, f64)> = (0..n)
        .into_par_iter()
        .map(|i| nearest_center(data.row(i), &centers))
        .collect();
    let assignments: Vec<u32> = scored.iter().map(|&(a, _)| a).collect();
    let error: f64 = scored.iter().map(|&(_, e)| e).sum();
    Ok(KMeansResult { centers, assignments, error })
}

fn seed_plus_plus(data: ArrayView2<f64>, k: usize, rng: &mut impl Rng) -> Array2<f64> {
    let n = data.nrows();
    let d = data.ncols();
    let mut centers = Array2::zeros((k, d));
    let first = rng.random_range(0..n);
    centers.row_mut(0).assign(&data.row(first));
    let mut min_d2: Vec<f64> = (0..n).map(|i| sq_dist(data.row(i), centers.row(0))).collect();
    for c in 1..k {
        let total: f64 = min_d2.iter().sum();
        let pick = if total > 0.0 {
            let mut target = rng.random::<f64>() * total;
            let mut chosen = n - 1;
            for (i, &w) in min_d2.iter().enumerate() {
                target -= w;
                if target <= 0.0 {
                    chosen = i;
                    break;
                }
            }
            chosen
        } else {
            // Every point already coincides with a center; any pick works.
            rng.random_range(0..n)
        };
        centers.row_mut(c).assign(&data.row(pick));
        for i in 0..n {
            let d2 = sq_dist(data.row(i), centers.row(c));
            if d2 < min_d2[i] {
                min_d2[i] = d2;
            }
        }
    }
    centers
}

/// Gives every empty cluster the point farthest from its current center.
/// Clusters are repaired in index order; each steals at most once per pass.
fn repair_empty_clusters(
    data: ArrayView2<f64>,
    centers: &Array2<f64>,
    assignments: &mut [u32],
    k: usize,
) {
    let mut counts = vec![0usize; k];
    for &a in assignments.iter() {
        counts[a as usize] += 1;
    }
    let mut stolen = vec![false; assignments.len()];
    for c in 0..k {
        if counts[c] > 0 {
            continue;
        }
        let mut far = (0usize, -1.0f64);
        for i in 0..assignments.len() {
            if stolen[i] || counts[assignments[i] as usize] <= 1 {
                continue;
            }
            let gap = sq_dist(data.row(i), centers.row(assignments[i] as usize));
            if gap > far.1 {
                far = (i, gap);
            }
        }
        if far.1 < 0.0 {
            continue;
        }
        counts[assignments[far.0] as usize] -= 1;
        assignments[far.0] = c as u32;
        counts[c] += 1;
        stolen[far.0] = true;
    }
}

#[cfg(test)]
mod tests {
    use super::*;
    use crate::data::synth_mixture;

    #[test]
    fn k_equals_n_reaches_zero_error() {
        let ds = synth_mixture(8, 3, 8, 0.2, 3).unwrap();
        let res = kmeans(ds.view(), 8, 20, 1).unwrap();
        assert!(res.error < 1e-20, "error = {}", res.error);
        let mut seen = res.assignments.clone();
        seen.sort_unstable();
        seen.dedup();
        assert_eq!(seen.len(), 8);
    }

    #[test]
    fn k_one_returns_the_mean() {
        let ds = synth_mixture(40, 4, 3, 0.1, 7).unwrap();
        let res = kmeans(ds.view(), 1, 5, 1).unwrap();
        let mut mean = vec![0.0; 4];
        for i in 0..40 {
            for j in 0..4 {
                mean[j] += ds.row(i)[j] / 40.0;
            }
        }
        for j in 0..4 {
            assert!((res.centers[[0, j]] - mean[j]).abs() < 1e-12);
        }
        let expect: f64 = (0..40)
            .map(|i| (0..4).map(|j| (ds.row(i)[j] - mean[j]).powi(2)).sum::<f64>())
            .sum();
        assert!((res.error - expect).abs() < 1e-9);
    }

    #[test]
    fn reported_error_matches_recomputation() {
        let ds = synth_mixture(120, 6, 5, 0.05, 11).unwrap();
        let res = kmeans(ds.view(), 5, 25, 2).unwrap();
        let recomputed: f64 = (0..ds.n())
            .map(|i| sq_dist(ds.row(i), res.centers.row(res.assignments[i] as usize)))
            .sum();
        assert!((res.error - recomputed).abs() <= 1e-9 * recomputed.max(1.0));
        for (i, &a) in res.assignments.iter().enumerate() {
            let (best, _) = nearest_center(ds.row(i), &res.centers);
            assert_eq!(a, best);
        }
    }

    #[test]
    fn beats_fifty_random_center_subsets() {
        let ds = synth_mixture(300, 8, 6, 0.03, 13).unwrap();
        let res = kmeans(ds.view(), 6, 50, 5).unwrap();
        let mut rng = crate::rng::stream_rng(99, "kmeans-restart-oracle");
        for _ in 0..50 {
            let mut centers = Array2::zeros((6, 8));
            for c in 0..6 {
                let pick = rng.random_range(0..ds.n());
                centers.row_mut(c).assign(&ds.row(pick));
            }
            let error: f64 = (0..ds.n()).map(|i| nearest_center(ds.row(i), &centers).1).sum();
            assert!(res.error <= error + 1e-12, "{} vs {}", res.error, error);
        }
    }

    #[test]
    fn duplicate_heavy_input_keeps_all_clusters_populated() {
        let ds = crate::data::Dataset::from_rows(&[
            vec![0.0, 0.0],
            vec![0.0, 0.0],
            vec![0.0, 0.0],
            vec![0.0, 0.0],
            vec![10.0, 0.0],
            vec![10.0, 0.1],
        ])
        .unwrap();
        let res = kmeans(ds.view(), 3, 30, 4).unwrap();
        let mut counts = [0; 3];
        for &a in &res.assignments {
            counts[a as usize] += 1;
        }
        assert!(counts.iter().all(|&c| c > 0), "counts = {counts:?}");
    }

    #[test]
    fn rejects_bad_k() {
        let ds = synth_mixture(5, 2, 2, 0.1, 0).unwrap();
        assert!(kmeans(ds.view(), 0, 5, 0).is_err());
        assert!(kmeans(ds.view(), 6, 5, 0).is_err());
    }

    #[test]
    fn deterministic_across_calls() {
        let ds = synth_mixture(200, 5, 4, 0.08, 21).unwrap();
        let a = kmeans(ds.view(), 4, 20, 9).unwrap();
        let b = kmeans(ds.view(), 4, 20, 9).unwrap();
        assert_eq!(a.assignments, b.assignments);
        assert_eq!(a.error.to_bits(), b.error.to_bits());
    }
}
