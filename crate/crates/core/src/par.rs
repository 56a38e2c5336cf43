//! Order-fixed parallel reductions.
//!
//! Floating-point sums here are split into fixed-size chunks, each chunk is
//! reduced sequentially, and the per-chunk partials are folded in chunk order.
//! The result is bitwise identical for any thread count, so `--threads`
//! changes wall time only, never output.

use rayon::prelude::*;

/// Chunk length for all deterministic reductions. Fixed independently of the
/// pool size; changing it would change rounding.
const CHUNK: usize = 1024;

/// Sum of `f(i)` for `i in 0..n`, reduced in a thread-count-independent order.
pub fn par_sum(n: usize, f: impl Fn(usize) -> f64 + Sync) -> f64 {
    let partials: Vec<f64> = (0..n.div_ceil(CHUNK))
        .into_par_iter()
        .map(|c| {
            let lo = c * CHUNK;
            let hi = (lo + CHUNK).min(n);
            let mut acc = 0.0;
            for i in lo..hi {
                acc += f(i);
            }
            acc
        })
        .collect();
    partials.iter().sum()
}

/// Element-wise sum of `n` contributions into a vector of length `len`.
///
/// `f(i, buf)` must add item `i`'s contribution into `buf`. Chunks are
/// accumulated independently and folded in order, like [`par_sum`].
pub fn par_sum_vec(n: usize, len: usize, f: impl Fn(usize, &mut [f64]) + Sync) -> Vec<f64> {
    let partials: Vec<Vec<f64>> = (0..n.div_ceil(CHUNK))
        .into_par_iter()
        .map(|c| {
            let lo = c * CHUNK;
            let hi = (lo + CHUNK).min(n);
            let mut buf = vec![0.0; len];
            for i in lo..hi {
                f(i, &mut buf);
            }
            buf
        })
        .collect();
    let mut total = vec![0.0; len];
    for part in &partials {
        for (t, p) in total.iter_mut().zip(part) {
            *t += *p;
        }
    }
    total
}
