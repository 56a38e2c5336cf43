//! Synthetic cluster mixtures for benchmarks and tests.

use ndarray::Array2;
use rand::Rng;
use rand_distr::StandardNormal;

use super::Dataset;
use crate::error::{Error, Result};
use crate::rng::stream_rng;

/// Draws `n` points around `n_clusters` uniform centers in the unit cube.
///
/// Point `i` belongs to cluster `i % n_clusters` and adds isotropic Gaussian
/// noise with standard deviation `spread` per coordinate; `spread = 0`
/// reproduces the centers exactly. The same `(n, d, n_clusters, spread,
/// seed)` always yields the same dataset.
pub fn synth_mixture(n: usize, d: usize, n_clusters: usize, spread: f64, seed: u64) -> Result<Dataset> {
    if n == 0 || d == 0 || n_clusters == 0 {
        return Err(Error::invalid("n, d and n_clusters must be positive"));
    }
    if !spread.is_finite() || spread < 0.0 {
        return Err(Error::invalid("spread must be finite and non-negative"));
    }
    let mut center_rng = stream_rng(seed, "synth-centers");
    let centers: Vec<Vec<f64>> = (0..n_clusters)
        .map(|_| (0..d).map(|_| center_rng.random::<f64>()).collect())
        .collect();
    let mut noise_rng = stream_rng(seed, "synth-noise");
    let mut out = Array2::zeros((n, d));
    for i in 0..n {
        let c = &centers[i % n_clusters];
        for j in 0..d {
            let noise: f64 = noise_rng.sample(StandardNormal);
            out[[i, j]] = c[j] + spread * noise;
        }
    }
    Dataset::from_array(out)
}
