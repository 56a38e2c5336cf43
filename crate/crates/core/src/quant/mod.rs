//! Additive codebook model shared by every quantizer in the crate.
//!
//! A model holds `M` dictionaries of `K` elements in the full `D`-dimensional
//! space. A vector's code picks one element per dictionary and the
//! approximation is their sum:
//!
//! ```text
//! x  ≈  x̄ = c[0][code[0]] + c[1][code[1]] + ... + c[M-1][code[M-1]]
//! ```
//!
//! The squared distance from a query `q` to `x̄` expands into three parts:
//!
//! ```text
//! ||q - x̄||² = Σ_m ||q - c[m][code[m]]||²  -  (M-1)·||q||²  +  δ(code)
//! δ(code)    = Σ_{i≠j} c[i][code[i]] · c[j][code[j]]
//! ```
//!
//! The first sum is a table lookup per dictionary, the second is constant per
//! query, and `δ` is the cross term the near-orthogonality trainers drive
//! toward a shared constant so scans can ignore it.

mod icm;
mod packed;

pub use icm::{exhaustive_encode, icm_encode, penalized_objective, IcmEncoder};
pub use packed::{pack_codes, packed_bytes_per_vector, unpack_codes};

use ndarray::{Array1, Array2, Array3, ArrayView1};
use rayon::prelude::*;

use crate::data::Dataset;
use crate::error::{Error, Result};
use crate::par::par_sum;

/// `M` dictionaries of `K` elements each, all in the full ambient dimension.
#[derive(Debug, Clone, PartialEq)]
pub struct CodebookSet {
    /// Shape `[M, K, D]`.
    tensor: Array3<f64>,
}

impl CodebookSet {
    pub fn new(tensor: Array3<f64>) -> Result<Self> {
        let (m, k, d) = tensor.dim();
        if m == 0 || k == 0 || d == 0 {
            return Err(Error::invalid(format!("codebook shape {m}x{k}x{d} must be positive")));
        }
        if !tensor.iter().all(|v| v.is_finite()) {
            return Err(Error::invalid("codebook contains non-finite values"));
        }
        Ok(CodebookSet { tensor })
    }

    pub fn m(&self) -> usize {
        self.tensor.dim().0
    }

    pub fn k(&self) -> usize {
        self.tensor.dim().1
    }

    pub fn dim(&self) -> usize {
        self.tensor.dim().2
    }

    pub fn element(&self, m: usize, k: usize) -> ArrayView1<'_, f64> {
        self.tensor.slice(ndarray::s![m, k, ..])
    }

    pub fn tensor(&self) -> &Array3<f64> {
        &self.tensor
    }

    pub(crate) fn tensor_mut(&mut self) -> &mut Array3<f64> {
        &mut self.tensor
    }

    /// Count of nonzero entries across all elements.
    pub fn nnz(&self) -> usize {
        self.tensor.iter().filter(|v| **v != 0.0).count()
    }

    /// Nonzero `(dim, value)` pairs of element `(m, k)`, ascending by dim.
    pub fn sparse_element(&self, m: usize, k: usize) -> Vec<(usize, f64)> {
        self.element(m, k)
            .iter()
            .enumerate()
            .filter(|(_, v)| **v != 0.0)
            .map(|(d, v)| (d, *v))
            .collect()
    }

    /// Squared norm of every element, shape `[M, K]`.
    pub fn element_norms(&self) -> Array2<f64> {
        let (m, k, _) = self.tensor.dim();
        let mut out = Array2::zeros((m, k));
        for mi in 0..m {
            for ki in 0..k {
                let e = self.element(mi, ki);
                out[[mi, ki]] = e.dot(&e);
            }
        }
        out
    }

    fn check_code(&self, code: &[u32]) -> Result<()> {
        if code.len() != self.m() {
            return Err(Error::invalid(format!(
                "code length {} != dictionary count {}",
                code.len(),
                self.m()
            )));
        }
        if let Some(&bad) = code.iter().find(|&&c| c as usize >= self.k()) {
            return Err(Error::invalid(format!("code index {bad} out of range 0..{}", self.k())));
        }
        Ok(())
    }
}

/// One code per dataset row; column `m` selects from dictionary `m`.
#[derive(Debug, Clone, PartialEq, Eq)]
pub struct Codes {
    data: Array2<u32>,
}

impl Codes {
    pub fn new(data: Array2<u32>) -> Result<Self> {
        if data.nrows() == 0 || data.ncols() == 0 {
            return Err(Error::invalid("codes must be non-empty"));
        }
        Ok(Codes { data })
    }

    pub fn from_rows(rows: &[Vec<u32>]) -> Result<Self> {
        if rows.is_empty() || rows[0].is_empty() {
            return Err(Error::invalid("codes must be non-empty"));
        }
        let m = rows[0].len();
        if rows.iter().any(|r| r.len() != m) {
            return Err(Error::invalid("code rows must share one length"));
        }
        let flat: Vec<u32> = rows.iter().flatten().copied().collect();
        let data = Array2::from_shape_vec((rows.len(), m), flat)
            .map_err(|e| Error::invalid(e.to_string()))?;
        Codes::new(data)
    }

    pub fn n(&self) -> usize {
        self.data.nrows()
    }

    pub fn m(&self) -> usize {
        self.data.ncols()
    }

    pub fn row(&self, i: usize) -> &[u32] {
        self.data.row(i).to_slice().expect("codes are stored row-major")
    }

    /// Largest index used anywhere, for serialization range checks.
    pub fn max_index(&self) -> u32 {
        self.data.iter().copied().max().unwrap_or(0)
    }
}

/// Sums the selected element of every dictionary.
pub fn reconstruct(codebooks: &CodebookSet, code: &[u32]) -> Result<Array1<f64>> {
    codebooks.check_code(code)?;
    let mut out = Array1::zeros(codebooks.dim());
    reconstruct_into(codebooks, code, &mut out);
    Ok(out)
}

pub(crate) fn reconstruct_into(codebooks: &CodebookSet, code: &[u32], out: &mut Array1<f64>) {
    out.fill(0.0);
    for (m, &k) in code.iter().enumerate() {
        *out += &codebooks.element(m, k as usize);
    }
}

/// Total squared reconstruction error `Σ_n ||x_n - x̄_n||²`.
pub fn quantization_error(codebooks: &CodebookSet, data: &Dataset, codes: &Codes) -> Result<f64> {
    if codes.n() != data.n() {
        return Err(Error::invalid(format!(
            "codes cover {} rows, dataset has {}",
            codes.n(),
            data.n()
        )));
    }
    if data.dim() != codebooks.dim() {
        return Err(Error::invalid("dataset and codebook dimensions differ"));
    }
    for i in 0..codes.n() {
        codebooks.check_code(codes.row(i))?;
    }
    Ok(par_sum(data.n(), |i| {
        let mut recon = Array1::zeros(codebooks.dim());
        reconstruct_into(codebooks, codes.row(i), &mut recon);
        data.row(i)
            .iter()
            .zip(recon.iter())
            .map(|(x, r)| (x - r) * (x - r))
            .sum()
    }))
}

/// Cross term `δ(code) = Σ_{i≠j} c_i · c_j` over ordered dictionary pairs.
///
/// With a cache this is `M·(M-1)` lookups; without, the dot products are
/// taken directly. `M = 1` has no pairs, so δ is exactly 0.
pub fn cross_term_delta(
    codebooks: &CodebookSet,
    code: &[u32],
    cache: Option<&InnerProductCache>,
) -> Result<f64> {
    codebooks.check_code(code)?;
    let m = codebooks.m();
    let mut delta = 0.0;
    match cache {
        Some(cache) => {
            cache.check_shape(codebooks)?;
            for i in 0..m {
                for j in 0..m {
                    if i != j {
                        delta += cache.get(i, code[i] as usize, j, code[j] as usize);
                    }
                }
            }
        }
        None => {
            for i in 0..m {
                for j in 0..m {
                    if i != j {
                        delta += codebooks
                            .element(i, code[i] as usize)
                            .dot(&codebooks.element(j, code[j] as usize));
                    }
                }
            }
        }
    }
    Ok(delta)
}

/// δ of every row, using one shared cache build.
pub fn deltas_for_codes(codebooks: &CodebookSet, codes: &Codes) -> Result<Vec<f64>> {
    let cache = InnerProductCache::build(codebooks);
    (0..codes.n())
        .into_par_iter()
        .map(|i| cross_term_delta(codebooks, codes.row(i), Some(&cache)))
        .collect()
}

/// All pairwise inner products between dictionary elements, symmetric.
#[derive(Debug, Clone)]
pub struct InnerProductCache {
    m: usize,
    k: usize,
    /// Shape `[M·K, M·K]`, indexed by `m·K + k`.
    table: Array2<f64>,
}

impl InnerProductCache {
    pub fn build(codebooks: &CodebookSet) -> Self {
        let (m, k, _) = codebooks.tensor.dim();
        let mk = m * k;
        let rows: Vec<Vec<f64>> = (0..mk)
            .into_par_iter()
            .map(|a| {
                let ea = codebooks.element(a / k, a % k);
                (0..mk)
                    .map(|b| ea.dot(&codebooks.element(b / k, b % k)))
                    .collect()
            })
            .collect();
        let mut table = Array2::zeros((mk, mk));
        for (a, row) in rows.into_iter().enumerate() {
            for (b, v) in row.into_iter().enumerate() {
                table[[a, b]] = v;
            }
        }
        InnerProductCache { m, k, table }
    }

    #[inline]
    pub fn get(&self, m1: usize, k1: usize, m2: usize, k2: usize) -> f64 {
        self.table[[m1 * self.k + k1, m2 * self.k + k2]]
    }

    fn check_shape(&self, codebooks: &CodebookSet) -> Result<()> {
        if self.m != codebooks.m() || self.k != codebooks.k() {
            return Err(Error::invalid("cache shape does not match codebooks"));
        }
        Ok(())
    }
}

/// Sequential greedy code: dictionary `m` picks the element closest to the
/// residual left by dictionaries `0..m`. For product-structured codebooks
/// this is exactly the per-subspace nearest element.
pub fn greedy_code(codebooks: &CodebookSet, x: ArrayView1<f64>) -> Result<Vec<u32>> {
    if x.len() != codebooks.dim() {
        return Err(Error::invalid("vector dimension does not match codebooks"));
    }
    let mut residual: Array1<f64> = x.to_owned();
    let mut code = Vec::with_capacity(codebooks.m());
    for m in 0..codebooks.m() {
        let mut best = (0u32, f64::INFINITY);
        for k in 0..codebooks.k() {
            let e = codebooks.element(m, k);
            let d: f64 = residual.iter().zip(e.iter()).map(|(r, c)| (r - c) * (r - c)).sum();
            if d < best.1 {
                best = (k as u32, d);
            }
        }
        residual -= &codebooks.element(m, best.0 as usize);
        code.push(best.0);
    }
    Ok(code)
}

#[cfg(test)]
mod tests {
    use super::*;
    use rand::Rng;

    pub(crate) fn random_codebooks(m: usize, k: usize, d: usize, seed: u64) -> CodebookSet {
        let mut rng = crate::rng::stream_rng(seed, "quant-test-codebooks");
        let tensor =
            Array3::from_shape_fn((m, k, d), |_| rng.random::<f64>() * 2.0 - 1.0);
        CodebookSet::new(tensor).unwrap()
    }

    #[test]
    fn reconstruct_sums_selected_elements() {
        let mut tensor = Array3::zeros((2, 2, 3));
        tensor[[0, 1, 0]] = 1.0;
        tensor[[1, 0, 2]] = 2.0;
        let cb = CodebookSet::new(tensor).unwrap();
        let x = reconstruct(&cb, &[1, 0]).unwrap();
        assert_eq!(x.to_vec(), vec![1.0, 0.0, 2.0]);
        assert!(reconstruct(&cb, &[2, 0]).is_err());
        assert!(reconstruct(&cb, &[0]).is_err());
    }

    #[test]
    fn reconstruct_matches_naive_summation() {
        let cb = random_codebooks(4, 5, 8, 1);
        let mut rng = crate::rng::stream_rng(2, "quant-test");
        for _ in 0..50 {
            let code: Vec<u32> = (0..4).map(|_| rng.random_range(0..5)).collect();
            let got = reconstruct(&cb, &code).unwrap();
            for d in 0..8 {
                let naive: f64 = (0..4).map(|m| cb.element(m, code[m] as usize)[d]).sum();
                assert!((got[d] - naive).abs() < 1e-15);
            }
        }
    }

    #[test]
    fn quantization_error_sums_per_point_errors() {
        let cb = random_codebooks(2, 3, 4, 3);
        let data = Dataset::from_rows(&[vec![0.1, 0.2, 0.3, 0.4], vec![1.0, 0.0, -1.0, 0.5]])
            .unwrap();
        let codes = Codes::from_rows(&[vec![0, 1], vec![2, 2]]).unwrap();
        let total = quantization_error(&cb, &data, &codes).unwrap();
        let mut expect = 0.0;
        for i in 0..2 {
            let recon = reconstruct(&cb, codes.row(i)).unwrap();
            expect += data
                .row(i)
                .iter()
                .zip(recon.iter())
                .map(|(x, r)| (x - r) * (x - r))
                .sum::<f64>();
        }
        assert!((total - expect).abs() < 1e-12);
        assert!(total > 0.0);

        let perfect = Codes::from_rows(&[vec![0, 1]]).unwrap();
        let exact = Dataset::from_array(
            reconstruct(&cb, perfect.row(0)).unwrap().insert_axis(ndarray::Axis(0)),
        )
        .unwrap();
        let zero = quantization_error(&cb, &exact, &perfect).unwrap();
        assert!(zero < 1e-20);
    }

    #[test]
    fn delta_is_zero_for_single_dictionary_and_disjoint_supports() {
        let cb1 = random_codebooks(1, 4, 6, 5);
        assert_eq!(cross_term_delta(&cb1, &[2], None).unwrap(), 0.0);

        // Supports on disjoint halves make every cross product vanish.
        let mut tensor = Array3::zeros((2, 2, 4));
        tensor[[0, 0, 0]] = 1.5;
        tensor[[0, 1, 1]] = -2.0;
        tensor[[1, 0, 2]] = 3.0;
        tensor[[1, 1, 3]] = 0.5;
        let cb = CodebookSet::new(tensor).unwrap();
        for k1 in 0..2u32 {
            for k2 in 0..2u32 {
                assert_eq!(cross_term_delta(&cb, &[k1, k2], None).unwrap(), 0.0);
            }
        }
    }

    #[test]
    fn delta_equals_norm_identity_and_cache_agrees() {
        let cb = random_codebooks(3, 4, 5, 7);
        let cache = InnerProductCache::build(&cb);
        let mut rng = crate::rng::stream_rng(8, "quant-test");
        for _ in 0..60 {
            let code: Vec<u32> = (0..3).map(|_| rng.random_range(0..4)).collect();
            let direct = cross_term_delta(&cb, &code, None).unwrap();
            let cached = cross_term_delta(&cb, &code, Some(&cache)).unwrap();
            let recon = reconstruct(&cb, &code).unwrap();
            let sum_norms: f64 = code
                .iter()
                .enumerate()
                .map(|(m, &k)| {
                    let e = cb.element(m, k as usize);
                    e.dot(&e)
                })
                .sum();
            let identity = recon.dot(&recon) - sum_norms;
            assert!((direct - identity).abs() < 1e-10);
            assert!((direct - cached).abs() < 1e-10);
        }
    }

    #[test]
    fn cache_is_symmetric() {
        let cb = random_codebooks(2, 3, 4, 9);
        let cache = InnerProductCache::build(&cb);
        for m1 in 0..2 {
            for k1 in 0..3 {
                for m2 in 0..2 {
                    for k2 in 0..3 {
                        assert_eq!(
                            cache.get(m1, k1, m2, k2).to_bits(),
                            cache.get(m2, k2, m1, k1).to_bits()
                        );
                    }
                }
            }
        }
    }

    #[test]
    fn greedy_code_on_product_codebooks_is_per_subspace_nearest() {
        let mut tensor = Array3::zeros((2, 2, 2));
        tensor[[0, 0, 0]] = 0.0;
        tensor[[0, 1, 0]] = 1.0;
        tensor[[1, 0, 1]] = 0.0;
        tensor[[1, 1, 1]] = 1.0;
        let cb = CodebookSet::new(tensor).unwrap();
        let x = ndarray::array![0.9, 0.2];
        assert_eq!(greedy_code(&cb, x.view()).unwrap(), vec![1, 0]);
    }
}
