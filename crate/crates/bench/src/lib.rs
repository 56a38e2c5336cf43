//! Deterministic fixtures for the criterion benches.
//!
//! Everything is seeded, so repeated runs time the same inputs. The sparse
//! model matches the default sparsity budget of the sparse trainer (K·D
//! nonzeros in total, i.e. D/M per element on average), which is the regime
//! where table construction is expected to beat the dense path.

use ndarray::{Array1, Array3};
use rand::Rng;

use vqann_core::data::Dataset;
use vqann_core::model::{QuantizerModel, Variant};
use vqann_core::quant::{CodebookSet, Codes};
use vqann_core::rng::stream_rng;

/// Dense dictionaries with uniform entries in [-0.5, 0.5).
pub fn dense_model(m: usize, k: usize, d: usize, seed: u64) -> QuantizerModel {
    let mut rng = stream_rng(seed, "bench-dense");
    let tensor = Array3::from_shape_fn((m, k, d), |_| rng.random::<f64>() - 0.5);
    let codebooks = CodebookSet::new(tensor).expect("fixture tensor is finite");
    QuantizerModel::new(Variant::Cq, codebooks, 0.0, None, Vec::new()).expect("valid model")
}

/// Same shape as [`dense_model`] but each element keeps only `d / m` nonzero
/// coordinates on a random support, so total nonzeros come to K·D.
pub fn sparse_model(m: usize, k: usize, d: usize, seed: u64) -> QuantizerModel {
    let per_element = (d / m).max(1);
    let mut rng = stream_rng(seed, "bench-sparse");
    let mut tensor = Array3::zeros((m, k, d));
    for mi in 0..m {
        for ki in 0..k {
            for di in rand::seq::index::sample(&mut rng, d, per_element) {
                tensor[[mi, ki, di]] = rng.random::<f64>() - 0.5;
            }
        }
    }
    let codebooks = CodebookSet::new(tensor).expect("fixture tensor is finite");
    QuantizerModel::new(Variant::Snocq, codebooks, 0.0, None, Vec::new()).expect("valid model")
}

/// Uniformly random valid codes for `n` vectors.
pub fn random_codes(n: usize, m: usize, k: usize, seed: u64) -> Codes {
    let mut rng = stream_rng(seed, "bench-codes");
    let rows: Vec<Vec<u32>> =
        (0..n).map(|_| (0..m).map(|_| rng.random_range(0..k as u32)).collect()).collect();
    Codes::from_rows(&rows).expect("fixture codes are rectangular")
}

/// One query vector with uniform entries in [-0.5, 0.5).
pub fn query(d: usize, seed: u64) -> Array1<f64> {
    let mut rng = stream_rng(seed, "bench-query");
    Array1::from_shape_fn(d, |_| rng.random::<f64>() - 0.5)
}

/// A small clustered batch for encoding benches.
pub fn batch(n: usize, d: usize, seed: u64) -> Dataset {
    vqann_core::data::synth_mixture(n, d, 16, 0.15, seed).expect("fixture mixture")
}
