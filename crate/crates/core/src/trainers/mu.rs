//! Validation-based selection of the penalty weight μ.
//!
//! The weight trades reconstruction accuracy against how tightly the cross
//! terms cluster around ε, and the right trade-off is dataset-dependent. So
//! it is picked the empirical way: hold out a slice of the base vectors,
//! train on the rest once per candidate, and keep the μ whose search recall
//! over the held-out queries is best. The same harness serves the sparse
//! trainer's λ sweep.

use rayon::prelude::*;

use crate::data::{brute_force_groundtruth, Dataset, GroundTruth, Metric};
use crate::error::{Error, Result};
use crate::model::QuantizerModel;
use crate::quant::{Codes, IcmEncoder};
use crate::rng::stream_rng;
use crate::search::{adc_scan, recall_at_r, SearchResult, TableBuilder};

use super::{train_nocq, TrainConfig};

/// A finished validation sweep: the winner and every candidate's score.
#[derive(Debug, Clone)]
pub struct ValidationSweep {
    pub chosen: f64,
    /// `(candidate, mean validation recall)` in ascending-candidate order.
    pub scores: Vec<(f64, f64)>,
}

/// Holds the split and ground truth one sweep evaluates every candidate
/// against: a seeded shuffle carves out `validation_fraction` of the base
/// vectors as queries, and their true neighbors over the full base are
/// computed once by brute force.
pub(crate) struct ValidationHarness {
    pub(crate) train: Dataset,
    queries: Dataset,
    gt: GroundTruth,
    /// Recall is averaged over recall@T for these T (the retrieval depth
    /// equals T).
    ts: Vec<usize>,
    t_max: usize,
}

impl ValidationHarness {
    pub(crate) fn new(data: &Dataset, validation_fraction: f64, seed: u64) -> Result<Self> {
        let n = data.n();
        if n < 2 {
            return Err(Error::invalid("validation needs at least 2 vectors"));
        }
        let n_val = ((n as f64 * validation_fraction).round() as usize).clamp(1, n - 1);

        let mut ids: Vec<usize> = (0..n).collect();
        let mut rng = stream_rng(seed, "mu-validation-split");
        for i in (1..n).rev() {
            use rand::Rng;
            ids.swap(i, rng.random_range(0..=i));
        }
        let (train_ids, val_ids) = ids.split_at(n - n_val);
        let mut train_ids = train_ids.to_vec();
        let mut val_ids = val_ids.to_vec();
        train_ids.sort_unstable();
        val_ids.sort_unstable();
        let train = data.subset(&train_ids)?;
        let queries = data.subset(&val_ids)?;

        let t_max = 100.min(n);
        let gt = brute_force_groundtruth(data, &queries, t_max, Metric::SquaredL2)?;
        let steps: Vec<usize> = (5..=t_max).step_by(5).collect();
        let ts = if steps.is_empty() { vec![t_max] } else { steps };
        Ok(ValidationHarness { train, queries, gt, ts, t_max })
    }

    /// Mean recall@T over the T grid for held-out queries scanned against
    /// codes of the full base.
    pub(crate) fn score(&self, model: &QuantizerModel, full_codes: &Codes) -> Result<f64> {
        let builder = TableBuilder::new(model);
        let results: Vec<SearchResult> = (0..self.queries.n())
            .into_par_iter()
            .map(|q| {
                let table = builder.distance_table(self.queries.row(q))?;
                adc_scan(model, &table, full_codes, self.t_max)
            })
            .collect::<Result<_>>()?;
        let mut total = 0.0;
        for &t in &self.ts {
            total += recall_at_r(&results, &self.gt, t, t)?;
        }
        Ok(total / self.ts.len() as f64)
    }

    /// Scores all candidates (ascending, deduplicated) with a
    /// train-and-encode closure; the best recall wins, ties going to the
    /// smaller candidate.
    pub(crate) fn sweep(
        &self,
        candidates: &[f64],
        mut train_and_encode: impl FnMut(&Dataset, f64) -> Result<(QuantizerModel, Codes)>,
    ) -> Result<ValidationSweep> {
        if candidates.is_empty() {
            return Err(Error::invalid("candidate grid must be non-empty"));
        }
        if candidates.iter().any(|v| !v.is_finite() || *v < 0.0) {
            return Err(Error::invalid("candidates must be finite and non-negative"));
        }
        let mut grid = candidates.to_vec();
        grid.sort_by(f64::total_cmp);
        grid.dedup();

        let mut best: Option<(f64, f64)> = None;
        let mut scores = Vec::with_capacity(grid.len());
        for &candidate in &grid {
            let (model, codes) = train_and_encode(&self.train, candidate)?;
            let recall = self.score(&model, &codes)?;
            scores.push((candidate, recall));
            if best.is_none_or(|(_, b)| recall > b) {
                best = Some((candidate, recall));
            }
        }
        let (chosen, _) = best.expect("grid is non-empty");
        Ok(ValidationSweep { chosen, scores })
    }
}

/// Picks μ by validation and returns only the winner.
pub fn select_mu(data: &Dataset, m: usize, k: usize, config: &TrainConfig) -> Result<f64> {
    Ok(select_mu_detailed(data, m, k, config)?.chosen)
}

/// Full μ sweep for the near-orthogonal trainer.
///
/// With no explicit grid, candidates default to
/// `{1e-4, 1e-3, 1e-2, 1e-1, 1, 10} × (warm-start error / N)` plus the μ = 0
/// baseline, so the winner never scores below the unpenalized model. New
/// vectors are encoded under the candidate's own penalty, measuring the
/// deployed pipeline end to end.
pub fn select_mu_detailed(
    data: &Dataset,
    m: usize,
    k: usize,
    config: &TrainConfig,
) -> Result<ValidationSweep> {
    config.validate()?;
    let harness = ValidationHarness::new(data, config.validation_fraction, config.seed)?;
    let grid = match &config.mu_grid {
        Some(grid) => grid.clone(),
        None => default_grid(&harness.train, m, k, config)?,
    };
    harness.sweep(&grid, |train, mu| {
        let cfg = TrainConfig { mu, ..config.clone() };
        let out = train_nocq(train, m, k, &cfg)?;
        let codes = {
            let encoder =
                IcmEncoder::new(&out.model.codebooks, mu, out.model.epsilon, cfg.icm_sweeps)?;
            encoder.encode_dataset(data, None)?
        };
        Ok((out.model, codes))
    })
}

/// Dimensionless default grid: fractions of the warm-start error per point,
/// with 0 as the always-present baseline.
fn default_grid(train: &Dataset, m: usize, k: usize, config: &TrainConfig) -> Result<Vec<f64>> {
    let pq = crate::baselines::train_pq(train, m, k, config.kmeans_iters, config.seed)?;
    let scale = pq.error / train.n() as f64;
    let mut grid: Vec<f64> = [1e-4, 1e-3, 1e-2, 1e-1, 1.0, 10.0].iter().map(|f| f * scale).collect();
    grid.insert(0, 0.0);
    Ok(grid)
}
