//! Trainers for the composite family.
//!
//! All three trainers share one alternation: warm start from product
//! quantization, then repeat (encode all points by ICM) → (closed-form ε
//! where applicable) → (dictionary update). They differ only in the penalty:
//!
//! * `train_cq` — no penalty; pure quantization error.
//! * `train_nocq` — quadratic penalty `μ Σ_n (δ_n - ε)²` pulling every
//!   point's cross term toward a shared constant ε.
//! * `train_ocq` — dictionary coherence penalty `μ Σ_{i≠j} ||C_iᵀC_j||_F²`
//!   with ε pinned to 0.
//!
//! Every sub-step minimizes the same objective over its own block, so the
//! recorded objective is nonincreasing.

mod composite;
mod mu;

pub use composite::{train_cq, train_nocq, train_ocq};
pub use mu::{select_mu, select_mu_detailed, ValidationSweep};
pub(crate) use mu::ValidationHarness;

use crate::baselines::{train_ckm, train_pq};
use crate::data::Dataset;
use crate::error::{Error, Result};
use crate::model::{QuantizerModel, TrainRecord, Variant};
use crate::quant::{deltas_for_codes, CodebookSet, Codes};
use crate::solvers::LbfgsConfig;

/// How plain composite quantization updates its dictionaries.
#[derive(Debug, Clone, Copy, PartialEq, Eq, serde::Serialize, serde::Deserialize)]
#[serde(rename_all = "kebab-case")]
pub enum DictionaryUpdate {
    /// A few L-BFGS steps per alternation. The default: empirically it lands
    /// in better local minima than the exact solve, an effect reported but
    /// not explained in the literature this follows.
    Iterative,
    /// Exact least-squares solve of the normal equations, with a ridge
    /// fallback of `1e-8 · trace` when the Gram matrix is ill-conditioned.
    ClosedForm,
}

/// Shared knobs for the composite trainers.
#[derive(Debug, Clone, serde::Serialize, serde::Deserialize)]
pub struct TrainConfig {
    /// Penalty weight μ ≥ 0. Ignored by `train_cq`.
    pub mu: f64,
    /// Candidate μ values for [`select_mu`]; `None` uses the built-in grid
    /// scaled by the warm-start error.
    pub mu_grid: Option<Vec<f64>>,
    /// Outer alternations.
    pub outer_iters: usize,
    /// Early stop once the objective improves by less than this fraction.
    pub rel_tol: f64,
    /// ICM sweeps per encode step.
    pub icm_sweeps: usize,
    /// Lloyd iterations inside the product-quantization warm start.
    pub kmeans_iters: usize,
    pub lbfgs: LbfgsConfig,
    pub dictionary_update: DictionaryUpdate,
    /// Fraction of base vectors held out as validation queries by
    /// [`select_mu`].
    pub validation_fraction: f64,
    pub seed: u64,
}

impl Default for TrainConfig {
    fn default() -> Self {
        TrainConfig {
            mu: 0.0,
            mu_grid: None,
            outer_iters: 30,
            rel_tol: 1e-5,
            icm_sweeps: 1,
            kmeans_iters: 25,
            lbfgs: LbfgsConfig::default(),
            dictionary_update: DictionaryUpdate::Iterative,
            validation_fraction: 0.1,
            seed: 0,
        }
    }
}

impl TrainConfig {
    pub fn validate(&self) -> Result<()> {
        if !self.mu.is_finite() || self.mu < 0.0 {
            return Err(Error::invalid("mu must be finite and non-negative"));
        }
        if self.outer_iters == 0 {
            return Err(Error::invalid("outer_iters must be at least 1"));
        }
        if self.icm_sweeps == 0 {
            return Err(Error::invalid("icm_sweeps must be at least 1"));
        }
        if !(0.0 < self.validation_fraction && self.validation_fraction < 1.0) {
            return Err(Error::invalid("validation_fraction must lie in (0, 1)"));
        }
        if !self.rel_tol.is_finite() || self.rel_tol < 0.0 {
            return Err(Error::invalid("rel_tol must be finite and non-negative"));
        }
        Ok(())
    }
}

/// A trained model together with the codes of the training set.
#[derive(Debug, Clone)]
pub struct TrainOutput {
    pub model: QuantizerModel,
    pub codes: Codes,
}

/// Closed-form ε: the mean per-point cross term, which minimizes
/// `Σ_n (δ_n - ε)²` exactly.
pub fn update_epsilon(codebooks: &CodebookSet, codes: &Codes) -> Result<f64> {
    let deltas = deltas_for_codes(codebooks, codes)?;
    Ok(deltas.iter().sum::<f64>() / deltas.len() as f64)
}

/// Product quantization wrapped into the shared model container.
pub fn pq_model(data: &Dataset, m: usize, k: usize, config: &TrainConfig) -> Result<TrainOutput> {
    config.validate()?;
    let pq = train_pq(data, m, k, config.kmeans_iters, config.seed)?;
    let record = TrainRecord {
        objective: pq.error,
        quant_error: pq.error,
        constraint_residual: 0.0,
    };
    Ok(TrainOutput {
        model: QuantizerModel::new(Variant::Pq, pq.codebooks, 0.0, None, vec![record])?,
        codes: pq.codes,
    })
}

/// Rotated product quantization wrapped into the shared model container.
pub fn ckm_model(data: &Dataset, m: usize, k: usize, config: &TrainConfig) -> Result<TrainOutput> {
    config.validate()?;
    let ckm = train_ckm(data, m, k, config.kmeans_iters, config.outer_iters, config.seed)?;
    let train_log = ckm
        .log
        .iter()
        .map(|&e| TrainRecord { objective: e, quant_error: e, constraint_residual: 0.0 })
        .collect();
    Ok(TrainOutput {
        model: QuantizerModel::new(
            Variant::Ckm,
            ckm.codebooks,
            0.0,
            Some(ckm.rotation),
            train_log,
        )?,
        codes: ckm.codes,
    })
}

#[cfg(test)]
mod tests {
    use super::*;
    use ndarray::Array3;

    #[test]
    fn epsilon_update_examples() {
        // Disjoint supports: every δ is 0, so the mean is 0.
        let mut tensor = Array3::zeros((2, 2, 2));
        tensor[[0, 0, 0]] = 1.0;
        tensor[[0, 1, 0]] = 2.0;
        tensor[[1, 0, 1]] = 3.0;
        tensor[[1, 1, 1]] = 4.0;
        let cb = CodebookSet::new(tensor).unwrap();
        let codes = Codes::from_rows(&[vec![0, 0], vec![1, 1]]).unwrap();
        assert_eq!(update_epsilon(&cb, &codes).unwrap(), 0.0);

        // Two points with δ = 1 and δ = 3 average to 2. With M = 2 the cross
        // term is 2·(c₁ · c₂), so inner products 0.5 and 1.5 do it.
        let mut tensor = Array3::zeros((2, 2, 1));
        tensor[[0, 0, 0]] = 1.0;
        tensor[[0, 1, 0]] = 3.0;
        tensor[[1, 0, 0]] = 0.5;
        let cb = CodebookSet::new(tensor).unwrap();
        let codes = Codes::from_rows(&[vec![0, 0], vec![1, 0]]).unwrap();
        assert!((update_epsilon(&cb, &codes).unwrap() - 2.0).abs() < 1e-15);
    }

    #[test]
    fn epsilon_equals_mean_of_per_point_cross_terms() {
        use crate::quant::cross_term_delta;
        let mut rng = crate::rng::stream_rng(4, "trainers-test");
        use rand::Rng;
        let tensor = Array3::from_shape_fn((3, 4, 5), |_| rng.random::<f64>() - 0.5);
        let cb = CodebookSet::new(tensor).unwrap();
        let rows: Vec<Vec<u32>> = (0..20)
            .map(|_| (0..3).map(|_| rng.random_range(0..4)).collect())
            .collect();
        let codes = Codes::from_rows(&rows).unwrap();
        let eps = update_epsilon(&cb, &codes).unwrap();
        let mean: f64 = (0..20)
            .map(|i| cross_term_delta(&cb, codes.row(i), None).unwrap())
            .sum::<f64>()
            / 20.0;
        assert!((eps - mean).abs() < 1e-12);
    }

    #[test]
    fn config_validation() {
        let mut cfg = TrainConfig::default();
        assert!(cfg.validate().is_ok());
        cfg.mu = -1.0;
        assert!(cfg.validate().is_err());
        cfg.mu = 0.0;
        cfg.outer_iters = 0;
        assert!(cfg.validate().is_err());
        cfg.outer_iters = 1;
        cfg.validation_fraction = 1.0;
        assert!(cfg.validate().is_err());
    }
}
