//! Product quantization.
//!
//! Dimensions are split into `M` contiguous spans; each span gets its own
//! k-means codebook. Elements are stored zero-padded to the full dimension,
//! which makes every cross-dictionary inner product exactly zero, so the
//! cross term δ vanishes identically for any code.

use ndarray::{Array2, Array3, s};
use rand::Rng;

use crate::data::Dataset;
use crate::error::{Error, Result};
use crate::quant::{CodebookSet, Codes};
use crate::rng::stream_rng;
use crate::solvers::kmeans;

/// Contiguous dimension spans, one per dictionary.
#[derive(Debug, Clone, PartialEq, Eq)]
pub struct SubspaceLayout {
    spans: Vec<std::ops::Range<usize>>,
    dim: usize,
}

impl SubspaceLayout {
    /// Splits `0..d` into `m` spans in natural order. When `m` does not
    /// divide `d`, the first `d % m` spans take one extra dimension.
    pub fn contiguous(d: usize, m: usize) -> Result<Self> {
        if m == 0 || d == 0 || m > d {
            return Err(Error::invalid(format!("need 1 <= m <= d, got m={m}, d={d}")));
        }
        let base = d / m;
        let extra = d % m;
        let mut spans = Vec::with_capacity(m);
        let mut start = 0;
        for i in 0..m {
            let len = base + usize::from(i < extra);
            spans.push(start..start + len);
            start += len;
        }
        Ok(SubspaceLayout { spans, dim: d })
    }

    pub fn m(&self) -> usize {
        self.spans.len()
    }

    pub fn dim(&self) -> usize {
        self.dim
    }

    pub fn span(&self, m: usize) -> std::ops::Range<usize> {
        self.spans[m].clone()
    }
}

/// A trained product quantizer with full-dimension, zero-padded elements.
#[derive(Debug, Clone)]
pub struct PqOutput {
    pub codebooks: CodebookSet,
    pub codes: Codes,
    pub layout: SubspaceLayout,
    /// Squared error contributed by each subspace; sums to `error`.
    pub per_subspace_errors: Vec<f64>,
    pub error: f64,
}

pub(crate) fn subspace_seed(seed: u64, m: usize) -> u64 {
    stream_rng(seed, &format!("pq-subspace-{m}")).random::<u64>()
}

/// Runs k-means independently on every dimension span.
pub fn train_pq(
    data: &Dataset,
    m: usize,
    k: usize,
    kmeans_iters: usize,
    seed: u64,
) -> Result<PqOutput> {
    if k == 0 || k > data.n() {
        return Err(Error::invalid(format!("k must be in 1..={}, got {k}", data.n())));
    }
    let layout = SubspaceLayout::contiguous(data.dim(), m)?;
    let mut tensor = Array3::zeros((m, k, data.dim()));
    let mut code_rows = Array2::<u32>::zeros((data.n(), m));
    let mut per_subspace_errors = Vec::with_capacity(m);
    for mi in 0..m {
        let span = layout.span(mi);
        let sub = data.view().slice_move(s![.., span.clone()]);
        let fit = kmeans(sub, k, kmeans_iters, subspace_seed(seed, mi))?;
        for ki in 0..k {
            tensor
                .slice_mut(s![mi, ki, span.clone()])
                .assign(&fit.centers.row(ki));
        }
        for (i, &a) in fit.assignments.iter().enumerate() {
            code_rows[[i, mi]] = a;
        }
        per_subspace_errors.push(fit.error);
    }
    let error = per_subspace_errors.iter().sum();
    Ok(PqOutput {
        codebooks: CodebookSet::new(tensor)?,
        codes: Codes::new(code_rows)?,
        layout,
        per_subspace_errors,
        error,
    })
}
