//! Iterated conditional modes over code indices.
//!
//! Encoding minimizes, per point, the penalized objective
//!
//! ```text
//! ||x - x̄(code)||² + μ·(δ(code) - ε)²
//! ```
//!
//! one dictionary at a time with the others held fixed. Each coordinate
//! update scans all `K` candidates and keeps the best (current index
//! included), so the objective never increases. `μ = 0` reduces to plain
//! residual encoding.

use ndarray::{Array2, ArrayView1};
use rayon::prelude::*;

use super::{greedy_code, CodebookSet, Codes, InnerProductCache};
use crate::data::Dataset;
use crate::error::{Error, Result};

/// Full per-point objective value for a given code.
pub fn penalized_objective(
    codebooks: &CodebookSet,
    x: ArrayView1<f64>,
    code: &[u32],
    mu: f64,
    epsilon: f64,
) -> Result<f64> {
    let recon = super::reconstruct(codebooks, code)?;
    let dist: f64 = x.iter().zip(recon.iter()).map(|(a, b)| (a - b) * (a - b)).sum();
    let delta = super::cross_term_delta(codebooks, code, None)?;
    Ok(dist + mu * (delta - epsilon) * (delta - epsilon))
}

/// Reusable encoder holding the inner-product cache and element norms.
pub struct IcmEncoder<'a> {
    codebooks: &'a CodebookSet,
    cache: InnerProductCache,
    norms: Array2<f64>,
    mu: f64,
    epsilon: f64,
    sweeps: usize,
}

impl<'a> IcmEncoder<'a> {
    pub fn new(codebooks: &'a CodebookSet, mu: f64, epsilon: f64, sweeps: usize) -> Result<Self> {
        if !mu.is_finite() || mu < 0.0 {
            return Err(Error::invalid("mu must be finite and non-negative"));
        }
        if !epsilon.is_finite() {
            return Err(Error::invalid("epsilon must be finite"));
        }
        if sweeps == 0 {
            return Err(Error::invalid("sweeps must be at least 1"));
        }
        Ok(IcmEncoder {
            codebooks,
            cache: InnerProductCache::build(codebooks),
            norms: codebooks.element_norms(),
            mu,
            epsilon,
            sweeps,
        })
    }

    /// Improves `init` in place order `m = 0..M`, `sweeps` times.
    pub fn encode(&self, x: ArrayView1<f64>, init: &[u32]) -> Result<Vec<u32>> {
        if x.len() != self.codebooks.dim() {
            return Err(Error::invalid("vector dimension does not match codebooks"));
        }
        let (m, k) = (self.codebooks.m(), self.codebooks.k());
        let mut code = init.to_vec();
        super::reconstruct(self.codebooks, &code)?;

        // x · c[m][k] for every element, reused across sweeps.
        let mut xdots = Array2::<f64>::zeros((m, k));
        for mi in 0..m {
            for ki in 0..k {
                xdots[[mi, ki]] = x.dot(&self.codebooks.element(mi, ki));
            }
        }

        for _ in 0..self.sweeps {
            // δ of the current code, refreshed per sweep to stop drift.
            let mut delta = 0.0;
            for i in 0..m {
                for j in 0..m {
                    if i != j {
                        delta += self.cache.get(i, code[i] as usize, j, code[j] as usize);
                    }
                }
            }
            for mi in 0..m {
                let cur = code[mi] as usize;
                // s · c[mi][k] where s is the sum of the other dictionaries.
                let mut sdot = vec![0.0; k];
                for (l, &cl) in code.iter().enumerate() {
                    if l == mi {
                        continue;
                    }
                    for (ki, slot) in sdot.iter_mut().enumerate() {
                        *slot += self.cache.get(l, cl as usize, mi, ki);
                    }
                }
                let delta_rest = delta - 2.0 * sdot[cur];
                let mut best = (cur, f64::INFINITY);
                for ki in 0..k {
                    // ||x - s - c||² = const - 2(x-s)·c + ||c||²; the const
                    // drops out of the argmin.
                    let partial = -2.0 * (xdots[[mi, ki]] - sdot[ki]) + self.norms[[mi, ki]];
                    let dk = delta_rest + 2.0 * sdot[ki];
                    let obj = partial + self.mu * (dk - self.epsilon) * (dk - self.epsilon);
                    if obj < best.1 {
                        best = (ki, obj);
                    }
                }
                code[mi] = best.0 as u32;
                delta = delta_rest + 2.0 * sdot[best.0];
            }
        }
        Ok(code)
    }

    /// Encodes every row; `init` defaults to the greedy code per point.
    /// Points are independent, so the result is thread-count invariant.
    pub fn encode_dataset(&self, data: &Dataset, init: Option<&Codes>) -> Result<Codes> {
        if let Some(init) = init {
            if init.n() != data.n() || init.m() != self.codebooks.m() {
                return Err(Error::invalid("init codes shape mismatch"));
            }
        }
        let rows: Vec<Vec<u32>> = (0..data.n())
            .into_par_iter()
            .map(|i| {
                let x = data.row(i);
                match init {
                    Some(codes) => self.encode(x, codes.row(i)),
                    None => {
                        let g = greedy_code(self.codebooks, x)?;
                        self.encode(x, &g)
                    }
                }
            })
            .collect::<Result<_>>()?;
        Codes::from_rows(&rows)
    }
}

/// One-point convenience wrapper that builds a fresh encoder.
///
/// For whole datasets use [`IcmEncoder`], which shares the cache build.
pub fn icm_encode(
    codebooks: &CodebookSet,
    x: ArrayView1<f64>,
    mu: f64,
    epsilon: f64,
    init: &[u32],
    sweeps: usize,
) -> Result<Vec<u32>> {
    IcmEncoder::new(codebooks, mu, epsilon, sweeps)?.encode(x, init)
}

/// Exhaustive encoder used as the ICM reference: scores all `K^M` codes.
/// Exponential, test-scale only.
pub fn exhaustive_encode(
    codebooks: &CodebookSet,
    x: ArrayView1<f64>,
    mu: f64,
    epsilon: f64,
) -> Result<(Vec<u32>, f64)> {
    let (m, k) = (codebooks.m(), codebooks.k());
    let mut best: Option<(Vec<u32>, f64)> = None;
    let mut code = vec![0u32; m];
    loop {
        let obj = penalized_objective(codebooks, x, &code, mu, epsilon)?;
        if best.as_ref().is_none_or(|(_, b)| obj < *b) {
            best = Some((code.clone(), obj));
        }
        // Odometer increment over the K^M code space.
        let mut pos = m;
        loop {
            if pos == 0 {
                return Ok(best.expect("at least one code scored"));
            }
            pos -= 1;
            code[pos] += 1;
            if (code[pos] as usize) < k {
                break;
            }
            code[pos] = 0;
        }
    }
}
