//! Exact nearest neighbors by exhaustive scan.
//!
//! This is the reference every approximate result in the crate is judged
//! against, so it stays deliberately simple: full scan per query, total order
//! `(score, id)` with lower ids winning ties.

use rayon::prelude::*;

use super::{Dataset, GroundTruth, Metric};
use crate::error::{Error, Result};

/// Computes the `t_max` exact nearest neighbors of every query.
///
/// `SquaredL2` sorts distances ascending, `InnerProduct` sorts scores
/// descending; ties break toward the lower base id in both cases. Queries are
/// processed in parallel but the output is independent of thread count.
pub fn brute_force_groundtruth(
    base: &Dataset,
    queries: &Dataset,
    t_max: usize,
    metric: Metric,
) -> Result<GroundTruth> {
    if base.dim() != queries.dim() {
        return Err(Error::invalid(format!(
            "base dimension {} != query dimension {}",
            base.dim(),
            queries.dim()
        )));
    }
    if t_max == 0 || t_max > base.n() {
        return Err(Error::invalid(format!(
            "t_max must be in 1..={}, got {t_max}",
            base.n()
        )));
    }
    let neighbors: Vec<Vec<u32>> = (0..queries.n())
        .into_par_iter()
        .map(|qi| {
            let q = queries.row(qi);
            let mut scored: Vec<(f64, u32)> = (0..base.n())
                .map(|bi| {
                    let x = base.row(bi);
                    let score = match metric {
                        Metric::SquaredL2 => {
                            q.iter().zip(x.iter()).map(|(a, b)| (a - b) * (a - b)).sum()
                        }
                        Metric::InnerProduct => q.dot(&x),
                    };
                    (score, bi as u32)
                })
                .collect();
            match metric {
                Metric::SquaredL2 => scored.sort_by(|a, b| a.0.total_cmp(&b.0).then(a.1.cmp(&b.1))),
                Metric::InnerProduct => {
                    scored.sort_by(|a, b| b.0.total_cmp(&a.0).then(a.1.cmp(&b.1)))
                }
            }
            scored.truncate(t_max);
            scored.into_iter().map(|(_, id)| id).collect()
        })
        .collect();
    GroundTruth::new(neighbors)
}
