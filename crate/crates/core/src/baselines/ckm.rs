//! Product quantization with a learned orthogonal rotation.
//!
//! Alternates three monotone steps on the rotated-space objective
//! `Σ_n ||R·x_n - ĉ_n||²`: a Procrustes rotation update (exact via SVD),
//! per-subspace re-encoding, and per-cluster mean updates. The published
//! codebooks are mapped back through `Rᵀ`, so downstream search treats the
//! model exactly like any other codebook set, and cross-dictionary inner
//! products stay zero up to rotation round-off.

use nalgebra::DMatrix;
use ndarray::{Array1, Array2, Array3, ArrayView1, s};
use rayon::prelude::*;

use super::pq::{train_pq, SubspaceLayout};
use crate::data::Dataset;
use crate::error::{Error, Result};
use crate::quant::{CodebookSet, Codes};

/// An orthogonal matrix mapping original space to rotated space.
#[derive(Debug, Clone, PartialEq)]
pub struct Rotation {
    matrix: Array2<f64>,
}

impl Rotation {
    pub fn identity(d: usize) -> Self {
        Rotation { matrix: Array2::eye(d) }
    }

    /// Validates `RᵀR = I` to a loose tolerance before accepting.
    pub fn new(matrix: Array2<f64>) -> Result<Self> {
        let d = matrix.nrows();
        if d == 0 || matrix.ncols() != d {
            return Err(Error::invalid("rotation must be square and non-empty"));
        }
        let gram = matrix.t().dot(&matrix);
        for i in 0..d {
            for j in 0..d {
                let expect = if i == j { 1.0 } else { 0.0 };
                if (gram[[i, j]] - expect).abs() > 1e-6 {
                    return Err(Error::invalid("matrix is not orthogonal"));
                }
            }
        }
        Ok(Rotation { matrix })
    }

    pub fn dim(&self) -> usize {
        self.matrix.nrows()
    }

    pub fn matrix(&self) -> &Array2<f64> {
        &self.matrix
    }

    /// `R · x`.
    pub fn apply(&self, x: ArrayView1<f64>) -> Array1<f64> {
        self.matrix.dot(&x)
    }
}

/// A trained rotated product quantizer.
#[derive(Debug, Clone)]
pub struct CkmOutput {
    /// Elements already mapped back to the original space.
    pub codebooks: CodebookSet,
    pub rotation: Rotation,
    pub codes: Codes,
    pub layout: SubspaceLayout,
    pub error: f64,
    /// Rotated-space objective after init and after each outer iteration.
    pub log: Vec<f64>,
}

/// Starting rotation for the alternation.
#[derive(Debug, Clone, Copy, PartialEq, Eq)]
pub enum RotationInit {
    /// Start from the identity; the first iterate is then plain product
    /// quantization and improvement is guaranteed.
    Identity,
    /// Start from a seeded random orthogonal matrix (QR of a Gaussian).
    Random,
}

/// Trains rotation and codebooks by alternation, warm-started from plain
/// product quantization with the identity rotation. `outer_iters = 0`
/// returns the product quantizer unchanged.
pub fn train_ckm(
    data: &Dataset,
    m: usize,
    k: usize,
    kmeans_iters: usize,
    outer_iters: usize,
    seed: u64,
) -> Result<CkmOutput> {
    train_ckm_with_init(data, m, k, kmeans_iters, outer_iters, seed, RotationInit::Identity)
}

pub fn train_ckm_with_init(
    data: &Dataset,
    m: usize,
    k: usize,
    kmeans_iters: usize,
    outer_iters: usize,
    seed: u64,
    init: RotationInit,
) -> Result<CkmOutput> {
    let d = data.dim();
    let n = data.n();
    let (mut rotation, mut rotated) = match init {
        RotationInit::Identity => (Array2::<f64>::eye(d), data.view().to_owned()),
        RotationInit::Random => {
            let r = random_orthogonal(d, seed);
            let z = data.view().dot(&r.t());
            (r, z)
        }
    };
    let start = Dataset::from_array(rotated.clone())?;
    let pq = train_pq(&start, m, k, kmeans_iters, seed)?;
    let layout = pq.layout.clone();
    let mut log = vec![pq.error];
    if outer_iters == 0 && matches!(init, RotationInit::Identity) {
        return Ok(CkmOutput {
            codebooks: pq.codebooks,
            rotation: Rotation::identity(d),
            codes: pq.codes,
            layout,
            error: pq.error,
            log,
        });
    }

    // Rotated-space state: sub-codebooks kept zero-padded in `rotated_books`,
    // data rotated fresh after each rotation update.
    let mut rotated_books = pq.codebooks.tensor().clone();
    let mut codes = pq.codes;
    let mut error = pq.error;

    for _ in 0..outer_iters {
        // Exact Procrustes step: maximize tr(R·B) with B = Σ x_n ĉ_nᵀ.
        let recon = reconstruction_matrix(&rotated_books, &codes, &layout);
        let mut b = DMatrix::<f64>::zeros(d, d);
        for i in 0..n {
            for r in 0..d {
                let xr = data.row(i)[r];
                for c in 0..d {
                    b[(r, c)] += xr * recon[[i, c]];
                }
            }
        }
        let svd = b.svd(true, true);
        let u = svd.u.as_ref().ok_or_else(|| Error::Numerical("svd failed".into()))?;
        let v_t = svd.v_t.as_ref().ok_or_else(|| Error::Numerical("svd failed".into()))?;
        let r_new = v_t.transpose() * u.transpose();
        for r in 0..d {
            for c in 0..d {
                rotation[[r, c]] = r_new[(r, c)];
            }
        }
        rotated = data.view().dot(&rotation.t());

        // Re-encode per subspace, then move centers to cluster means.
        let code_rows: Vec<Vec<u32>> = (0..n)
            .into_par_iter()
            .map(|i| {
                (0..m)
                    .map(|mi| {
                        let span = layout.span(mi);
                        let mut best = (0u32, f64::INFINITY);
                        for ki in 0..k {
                            let mut dist = 0.0;
                            for dd in span.clone() {
                                let gap = rotated[[i, dd]] - rotated_books[[mi, ki, dd]];
                                dist += gap * gap;
                            }
                            if dist < best.1 {
                                best = (ki as u32, dist);
                            }
                        }
                        best.0
                    })
                    .collect()
            })
            .collect();
        codes = Codes::from_rows(&code_rows)?;

        for mi in 0..m {
            let span = layout.span(mi);
            let mut sums = Array2::<f64>::zeros((k, span.len()));
            let mut counts = vec![0usize; k];
            for i in 0..n {
                let ki = codes.row(i)[mi] as usize;
                counts[ki] += 1;
                for (j, dd) in span.clone().enumerate() {
                    sums[[ki, j]] += rotated[[i, dd]];
                }
            }
            for ki in 0..k {
                if counts[ki] == 0 {
                    continue;
                }
                for (j, dd) in span.clone().enumerate() {
                    rotated_books[[mi, ki, dd]] = sums[[ki, j]] / counts[ki] as f64;
                }
            }
        }

        let recon = reconstruction_matrix(&rotated_books, &codes, &layout);
        error = crate::par::par_sum(n, |i| {
            (0..d).map(|dd| (rotated[[i, dd]] - recon[[i, dd]]).powi(2)).sum()
        });
        let prev = *log.last().expect("log starts with the init error");
        log.push(error);
        if prev - error <= 1e-5 * prev.abs().max(1e-30) {
            break;
        }
    }

    // Publish elements in the original space: element = Rᵀ · ĉ.
    let mut mapped = Array3::zeros((m, k, d));
    for mi in 0..m {
        for ki in 0..k {
            let e = rotated_books.slice(s![mi, ki, ..]);
            let back = rotation.t().dot(&e);
            mapped.slice_mut(s![mi, ki, ..]).assign(&back);
        }
    }
    Ok(CkmOutput {
        codebooks: CodebookSet::new(mapped)?,
        rotation: Rotation::new(rotation)?,
        codes,
        layout,
        error,
        log,
    })
}

fn random_orthogonal(d: usize, seed: u64) -> Array2<f64> {
    use rand::Rng;
    let mut rng = crate::rng::stream_rng(seed, "ckm-random-rotation");
    let gauss = DMatrix::from_fn(d, d, |_, _| {
        rng.sample::<f64, _>(rand_distr::StandardNormal)
    });
    let qr = gauss.qr();
    let q = qr.q();
    let mut out = Array2::zeros((d, d));
    for r in 0..d {
        for c in 0..d {
            out[[r, c]] = q[(r, c)];
        }
    }
    out
}

fn reconstruction_matrix(books: &Array3<f64>, codes: &Codes, layout: &SubspaceLayout) -> Array2<f64> {
    let n = codes.n();
    let d = layout.dim();
    let mut out = Array2::zeros((n, d));
    for i in 0..n {
        for (mi, &ki) in codes.row(i).iter().enumerate() {
            for dd in layout.span(mi) {
                out[[i, dd]] = books[[mi, ki as usize, dd]];
            }
        }
    }
    out
}
