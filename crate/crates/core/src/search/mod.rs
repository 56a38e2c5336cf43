//! Query-side engine: lookup tables, linear scans, and retrieval metrics.
//!
//! A scan never touches base vectors. Each query builds an M×K table of
//! query-to-element distances (or inner products); the score of a code is
//! M table lookups. For squared distance the lookup sum relates to the true
//! distance to the reconstruction through
//!
//! ```text
//! ||q - x̄||² = Σ_m ||q - c_m||² - (M-1)·||q||² + δ
//! ```
//!
//! so ranking by the lookup sum alone is exact whenever every point shares
//! one δ (orthogonal models have δ = 0; the near-orthogonal trainers push all
//! δ toward a common ε). `reconstruction_scan` adds the per-point δ back for
//! the exact ranking at the cost of one stored value per point.

mod metrics;

pub use metrics::{mean_average_precision, recall_at_r};

use std::collections::BinaryHeap;

use ndarray::{Array2, ArrayView1};

use crate::data::Dataset;
use crate::error::{Error, Result};
use crate::model::QuantizerModel;
use crate::quant::{deltas_for_codes, icm_encode, greedy_code, reconstruct, Codes};

/// What the table entries mean.
#[derive(Debug, Clone, Copy, PartialEq, Eq)]
pub enum TableKind {
    /// `entries[m][k] = ||q - c_mk||²`
    SquaredEuclidean,
    /// `entries[m][k] = ⟨q, c_mk⟩`
    InnerProduct,
}

/// Per-query lookup table over all M·K dictionary elements.
#[derive(Debug, Clone)]
pub struct DistanceTable {
    kind: TableKind,
    entries: Array2<f64>,
    query_sq_norm: f64,
    ops: usize,
}

impl DistanceTable {
    pub fn kind(&self) -> TableKind {
        self.kind
    }

    pub fn m(&self) -> usize {
        self.entries.nrows()
    }

    pub fn k(&self) -> usize {
        self.entries.ncols()
    }

    pub fn entry(&self, m: usize, k: usize) -> f64 {
        self.entries[[m, k]]
    }

    pub fn query_sq_norm(&self) -> f64 {
        self.query_sq_norm
    }

    /// Multiply-adds spent on query-dependent work while building. Dense
    /// construction costs exactly M·K·D; the sparse path costs the touched
    /// nonzeros plus D for `||q||²`. Model-side precomputation (element
    /// norms, nonzero lists) is query-independent and not counted.
    pub fn ops(&self) -> usize {
        self.ops
    }

    /// `Σ_m entries[m][code[m]]`, the scan score of one code.
    pub fn lookup_score(&self, code: &[u32]) -> f64 {
        code.iter().enumerate().map(|(m, &k)| self.entries[[m, k as usize]]).sum()
    }
}

/// Reusable query-table factory for one model.
///
/// Holds the query-independent pieces: element squared norms and, when the
/// codebooks are sparse enough to pay off, per-element nonzero lists with
/// values pre-scaled by -2 so each table entry costs only its nonzeros.
pub struct TableBuilder<'a> {
    model: &'a QuantizerModel,
    norms: Array2<f64>,
    /// `(dim, -2·value)` pairs per element, indexed `m·K + k`; `None` when
    /// dense evaluation is cheaper.
    sparse: Option<Vec<Vec<(u32, f64)>>>,
}

impl<'a> TableBuilder<'a> {
    pub fn new(model: &'a QuantizerModel) -> Self {
        let cb = &model.codebooks;
        let (m, k, d) = (cb.m(), cb.k(), cb.dim());
        let nnz = cb.nnz();
        let sparse = if nnz + d < m * k * d {
            Some(
                (0..m * k)
                    .map(|e| {
                        cb.sparse_element(e / k, e % k)
                            .into_iter()
                            .map(|(di, v)| (di as u32, -2.0 * v))
                            .collect()
                    })
                    .collect(),
            )
        } else {
            None
        };
        TableBuilder { model, norms: cb.element_norms(), sparse }
    }

    pub fn distance_table(&self, query: ArrayView1<f64>) -> Result<DistanceTable> {
        self.build(query, TableKind::SquaredEuclidean)
    }

    pub fn inner_product_table(&self, query: ArrayView1<f64>) -> Result<DistanceTable> {
        self.build(query, TableKind::InnerProduct)
    }

    fn build(&self, query: ArrayView1<f64>, kind: TableKind) -> Result<DistanceTable> {
        let cb = &self.model.codebooks;
        let (m, k, d) = (cb.m(), cb.k(), cb.dim());
        if query.len() != d {
            return Err(Error::invalid(format!(
                "query dimension {} does not match model dimension {d}",
                query.len()
            )));
        }
        if !query.iter().all(|v| v.is_finite()) {
            return Err(Error::invalid("query contains non-finite values"));
        }
        let query_sq_norm = query.dot(&query);

        let mut entries = Array2::zeros((m, k));
        let mut ops;
        match (&self.sparse, kind) {
            (Some(elements), TableKind::SquaredEuclidean) => {
                // ||q - c||² = ||q||² + (||c||² + Σ (-2 c_d)·q_d)
                ops = d;
                let q = query.to_slice().expect("query rows are contiguous");
                for mi in 0..m {
                    for ki in 0..k {
                        let elem = &elements[mi * k + ki];
                        let mut dot = 0.0;
                        for &(di, v) in elem {
                            dot += v * q[di as usize];
                        }
                        ops += elem.len();
                        entries[[mi, ki]] = query_sq_norm + self.norms[[mi, ki]] + dot;
                    }
                }
            }
            (Some(elements), TableKind::InnerProduct) => {
                ops = 0;
                let q = query.to_slice().expect("query rows are contiguous");
                for mi in 0..m {
                    for ki in 0..k {
                        let elem = &elements[mi * k + ki];
                        let mut dot = 0.0;
                        for &(di, v) in elem {
                            dot += v * q[di as usize];
                        }
                        ops += elem.len();
                        entries[[mi, ki]] = -0.5 * dot;
                    }
                }
            }
            (None, TableKind::SquaredEuclidean) => {
                ops = m * k * d;
                for mi in 0..m {
                    for ki in 0..k {
                        let e = cb.element(mi, ki);
                        entries[[mi, ki]] = query
                            .iter()
                            .zip(e.iter())
                            .map(|(a, b)| (a - b) * (a - b))
                            .sum();
                    }
                }
            }
            (None, TableKind::InnerProduct) => {
                ops = m * k * d;
                for mi in 0..m {
                    for ki in 0..k {
                        entries[[mi, ki]] = query.dot(&cb.element(mi, ki));
                    }
                }
            }
        }
        Ok(DistanceTable { kind, entries, query_sq_norm, ops })
    }
}

/// Builds the M×K squared-distance table for one query.
pub fn build_distance_table(model: &QuantizerModel, query: ArrayView1<f64>) -> Result<DistanceTable> {
    TableBuilder::new(model).distance_table(query)
}

/// Builds the M×K inner-product table for one query.
pub fn build_inner_product_table(
    model: &QuantizerModel,
    query: ArrayView1<f64>,
) -> Result<DistanceTable> {
    TableBuilder::new(model).inner_product_table(query)
}

/// Top-r ids with their scores.
#[derive(Debug, Clone, PartialEq)]
pub struct SearchResult {
    /// Unique base ids, best first.
    pub ids: Vec<u32>,
    /// Matching scores: ascending for distances, descending for inner
    /// products.
    pub scores: Vec<f64>,
    /// Set when the requested r exceeded the corpus and was clipped.
    pub clipped: bool,
}

/// Heap key ordered by `(score, id)`; `-0.0` is folded into `0.0` so the id
/// always breaks numeric ties.
#[derive(PartialEq)]
struct HeapEntry {
    key: f64,
    id: u32,
}

impl HeapEntry {
    fn new(score: f64, id: u32) -> Self {
        HeapEntry { key: if score == 0.0 { 0.0 } else { score }, id }
    }
}

impl Eq for HeapEntry {}

impl Ord for HeapEntry {
    fn cmp(&self, other: &Self) -> std::cmp::Ordering {
        self.key.total_cmp(&other.key).then(self.id.cmp(&other.id))
    }
}

impl PartialOrd for HeapEntry {
    fn partial_cmp(&self, other: &Self) -> Option<std::cmp::Ordering> {
        Some(self.cmp(other))
    }
}

/// Keeps the r best of n scored items in a bounded max-heap. `descending`
/// negates scores on the way in, so "best" is always the smallest `(key, id)`
/// pair and equal scores resolve to the lower id.
pub(crate) fn top_r(
    n: usize,
    r: usize,
    descending: bool,
    score: impl Fn(usize) -> f64,
) -> Result<SearchResult> {
    top_r_scored((0..n).map(|id| (id as u32, score(id))), n, r, descending)
}

/// [`top_r`] over explicit `(id, score)` pairs, for callers whose candidates
/// are not the contiguous range `0..n` (ties still resolve to the lower id).
pub(crate) fn top_r_scored(
    pairs: impl Iterator<Item = (u32, f64)>,
    n: usize,
    r: usize,
    descending: bool,
) -> Result<SearchResult> {
    if r == 0 {
        return Err(Error::invalid("r must be at least 1"));
    }
    let clipped = r > n;
    let keep = r.min(n);
    if keep == 0 {
        return Ok(SearchResult { ids: vec![], scores: vec![], clipped });
    }
    let mut heap = BinaryHeap::with_capacity(keep + 1);
    for (id, s) in pairs {
        let entry = HeapEntry::new(if descending { -s } else { s }, id);
        if heap.len() < keep {
            heap.push(entry);
        } else if entry < *heap.peek().expect("heap is non-empty") {
            heap.pop();
            heap.push(entry);
        }
    }
    let mut sorted = heap.into_vec();
    sorted.sort_unstable();
    let ids = sorted.iter().map(|e| e.id).collect();
    let scores = sorted.iter().map(|e| if descending { -e.key } else { e.key }).collect();
    Ok(SearchResult { ids, scores, clipped })
}

fn check_scan_inputs(model: &QuantizerModel, codes: &Codes) -> Result<()> {
    if codes.m() != model.m() {
        return Err(Error::invalid(format!(
            "codes have {} indices per vector, model has {} dictionaries",
            codes.m(),
            model.m()
        )));
    }
    if codes.max_index() as usize >= model.k() {
        return Err(Error::invalid("code index out of dictionary range"));
    }
    Ok(())
}

/// Table-lookup scan: `score_n = Σ_m table[m][code_n[m]]`, top-r ascending.
///
/// Neither `(M-1)||q||²` nor any δ is added; both are rank-neutral whenever
/// all points share one δ, which is the model family's design point.
pub fn adc_scan(
    model: &QuantizerModel,
    table: &DistanceTable,
    codes: &Codes,
    r: usize,
) -> Result<SearchResult> {
    if table.kind() != TableKind::SquaredEuclidean {
        return Err(Error::invalid("adc_scan needs a squared-distance table"));
    }
    if table.m() != model.m() || table.k() != model.k() {
        return Err(Error::invalid("table shape does not match model"));
    }
    check_scan_inputs(model, codes)?;
    top_r(codes.n(), r, false, |i| table.lookup_score(codes.row(i)))
}

/// Exact-distance scan over reconstructions via the table path.
///
/// With `include_delta` the stored per-point cross term is added back and
/// scores equal `||q - x̄_n||²`; without it the scan ranks like [`adc_scan`]
/// but reports centered scores (the δ-discarding mode).
pub fn reconstruction_scan(
    model: &QuantizerModel,
    query: ArrayView1<f64>,
    codes: &Codes,
    r: usize,
    include_delta: bool,
) -> Result<SearchResult> {
    check_scan_inputs(model, codes)?;
    let table = build_distance_table(model, query)?;
    let offset = (model.m() as f64 - 1.0) * table.query_sq_norm();
    if include_delta {
        let deltas = deltas_for_codes(&model.codebooks, codes)?;
        top_r(codes.n(), r, false, |i| table.lookup_score(codes.row(i)) - offset + deltas[i])
    } else {
        top_r(codes.n(), r, false, |i| table.lookup_score(codes.row(i)) - offset)
    }
}

/// Maximum-inner-product scan: top-r by descending `Σ_m ⟨q, c_m⟩`.
///
/// The ranking is invariant to positive rescaling of the query, so queries
/// differing only in L2 norm retrieve the same ids.
pub fn inner_product_scan(
    model: &QuantizerModel,
    query: ArrayView1<f64>,
    codes: &Codes,
    r: usize,
) -> Result<SearchResult> {
    check_scan_inputs(model, codes)?;
    let table = build_inner_product_table(model, query)?;
    top_r(codes.n(), r, true, |i| table.lookup_score(codes.row(i)))
}

/// How many ICM sweeps the query compressor runs; queries are encoded once,
/// so a little extra polish is free compared with dataset encoding.
const QUERY_ENCODE_SWEEPS: usize = 3;

/// Compressed-query mode: the query itself is encoded with the unconstrained
/// encoder of the same codebooks (best reconstruction, no penalty), the
/// reconstruction q̄ replaces q, and the scan proceeds as usual.
pub fn compressed_query_search(
    model: &QuantizerModel,
    query: ArrayView1<f64>,
    base_codes: &Codes,
    r: usize,
) -> Result<SearchResult> {
    if query.len() != model.dim() {
        return Err(Error::invalid("query dimension does not match model"));
    }
    if !query.iter().all(|v| v.is_finite()) {
        return Err(Error::invalid("query contains non-finite values"));
    }
    let init = greedy_code(&model.codebooks, query)?;
    let code = icm_encode(&model.codebooks, query, 0.0, 0.0, &init, QUERY_ENCODE_SWEEPS)?;
    let compressed = reconstruct(&model.codebooks, &code)?;
    let table = build_distance_table(model, compressed.view())?;
    adc_scan(model, &table, base_codes, r)
}

/// Brute-force top-r over raw vectors, the reference the scans are tested
/// against.
pub fn exact_scan(
    base: &Dataset,
    query: ArrayView1<f64>,
    r: usize,
) -> Result<SearchResult> {
    if query.len() != base.dim() {
        return Err(Error::invalid("query dimension does not match dataset"));
    }
    top_r(base.n(), r, false, |i| {
        base.row(i).iter().zip(query.iter()).map(|(x, q)| (x - q) * (x - q)).sum()
    })
}

#[cfg(test)]
mod tests {
    use super::*;
    use crate::model::{QuantizerModel, Variant};
    use crate::quant::{cross_term_delta, CodebookSet};
    use ndarray::{Array1, Array3};
    use rand::Rng;

    fn random_model(m: usize, k: usize, d: usize, seed: u64) -> QuantizerModel {
        let mut rng = crate::rng::stream_rng(seed, "search-test");
        let tensor = Array3::from_shape_fn((m, k, d), |_| rng.random::<f64>() * 2.0 - 1.0);
        QuantizerModel::new(Variant::Cq, CodebookSet::new(tensor).unwrap(), 0.0, None, vec![])
            .unwrap()
    }

    fn random_codes(n: usize, m: usize, k: usize, seed: u64) -> Codes {
        let mut rng = crate::rng::stream_rng(seed, "search-test-codes");
        Codes::from_rows(
            &(0..n)
                .map(|_| (0..m).map(|_| rng.random_range(0..k as u32)).collect())
                .collect::<Vec<_>>(),
        )
        .unwrap()
    }

    fn random_query(d: usize, seed: u64) -> Array1<f64> {
        let mut rng = crate::rng::stream_rng(seed, "search-test-query");
        Array1::from_shape_fn(d, |_| rng.random::<f64>() * 2.0 - 1.0)
    }

    #[test]
    fn table_entries_match_direct_recomputation() {
        let model = random_model(3, 4, 6, 1);
        let q = random_query(6, 2);
        let table = build_distance_table(&model, q.view()).unwrap();
        let ip = build_inner_product_table(&model, q.view()).unwrap();
        for m in 0..3 {
            for k in 0..4 {
                let e = model.codebooks.element(m, k);
                let dist: f64 = q.iter().zip(e.iter()).map(|(a, b)| (a - b) * (a - b)).sum();
                assert!((table.entry(m, k) - dist).abs() < 1e-12);
                assert!((ip.entry(m, k) - q.dot(&e)).abs() < 1e-12);
            }
        }
        assert_eq!(table.ops(), 3 * 4 * 6);

        // q equal to an element zeroes that entry; a zero query leaves the
        // element norms.
        let elem = model.codebooks.element(0, 0).to_owned();
        let t = build_distance_table(&model, elem.view()).unwrap();
        assert_eq!(t.entry(0, 0), 0.0);
        let zero = Array1::zeros(6);
        let t = build_distance_table(&model, zero.view()).unwrap();
        let norms = model.codebooks.element_norms();
        for m in 0..3 {
            for k in 0..4 {
                assert_eq!(t.entry(m, k).to_bits(), norms[[m, k]].to_bits());
            }
        }
    }

    #[test]
    fn sparse_table_path_agrees_with_dense_math_and_counts_ops() {
        // Two nonzeros per element: clearly below the dense break-even.
        let (m, k, d) = (2, 3, 8);
        let mut rng = crate::rng::stream_rng(3, "search-test-sparse");
        let mut tensor = Array3::zeros((m, k, d));
        for mi in 0..m {
            for ki in 0..k {
                for _ in 0..2 {
                    let di = rng.random_range(0..d);
                    tensor[[mi, ki, di]] = rng.random::<f64>() + 0.1;
                }
            }
        }
        let model = QuantizerModel::new(
            Variant::Snocq,
            CodebookSet::new(tensor).unwrap(),
            0.0,
            None,
            vec![],
        )
        .unwrap();
        let nnz = model.codebooks.nnz();
        assert!(nnz <= 2 * m * k);

        let q = random_query(d, 4);
        let builder = TableBuilder::new(&model);
        let table = builder.distance_table(q.view()).unwrap();
        for mi in 0..m {
            for ki in 0..k {
                let e = model.codebooks.element(mi, ki);
                let direct: f64 = q.iter().zip(e.iter()).map(|(a, b)| (a - b) * (a - b)).sum();
                assert!((table.entry(mi, ki) - direct).abs() < 1e-12);
            }
        }
        assert_eq!(table.ops(), nnz + d);
        let dense_ops = m * k * d;
        assert!(
            (table.ops() as f64) <= 1.1 * (nnz as f64 / dense_ops as f64) * dense_ops as f64 + d as f64
        );

        let ip = builder.inner_product_table(q.view()).unwrap();
        assert_eq!(ip.ops(), nnz);
        for mi in 0..m {
            for ki in 0..k {
                let direct = q.dot(&model.codebooks.element(mi, ki));
                assert!((ip.entry(mi, ki) - direct).abs() < 1e-12);
            }
        }
    }

    #[test]
    fn lookup_score_satisfies_the_three_term_identity() {
        let model = random_model(4, 5, 7, 5);
        let codes = random_codes(40, 4, 5, 6);
        let q = random_query(7, 7);
        let table = build_distance_table(&model, q.view()).unwrap();
        for i in 0..codes.n() {
            let code = codes.row(i);
            let lookup = table.lookup_score(code);
            let delta = cross_term_delta(&model.codebooks, code, None).unwrap();
            let recon = reconstruct(&model.codebooks, code).unwrap();
            let exact: f64 = q.iter().zip(recon.iter()).map(|(a, b)| (a - b) * (a - b)).sum();
            let via_table = lookup - 3.0 * table.query_sq_norm() + delta;
            assert!(
                (via_table - exact).abs() <= 1e-9 * exact.abs().max(1.0),
                "identity broke: {via_table} vs {exact}"
            );
        }
    }

    #[test]
    fn adc_scan_on_equal_delta_model_matches_reconstruction_ranking() {
        // Disjoint supports give δ ≡ 0, the product-quantizer case.
        let (m, k, d) = (2, 4, 6);
        let mut rng = crate::rng::stream_rng(8, "search-test-pq");
        let mut tensor = Array3::zeros((m, k, d));
        for ki in 0..k {
            for di in 0..3 {
                tensor[[0, ki, di]] = rng.random::<f64>();
                tensor[[1, ki, di + 3]] = rng.random::<f64>();
            }
        }
        let model = QuantizerModel::new(
            Variant::Pq,
            CodebookSet::new(tensor).unwrap(),
            0.0,
            None,
            vec![],
        )
        .unwrap();
        let codes = random_codes(60, m, k, 9);
        let q = random_query(d, 10);
        let table = build_distance_table(&model, q.view()).unwrap();
        let adc = adc_scan(&model, &table, &codes, 60).unwrap();

        // Oracle: brute force over explicit reconstructions.
        let recon_rows: Vec<Vec<f64>> = (0..codes.n())
            .map(|i| reconstruct(&model.codebooks, codes.row(i)).unwrap().to_vec())
            .collect();
        let recon = Dataset::from_rows(&recon_rows).unwrap();
        let exact = exact_scan(&recon, q.view(), 60).unwrap();
        assert_eq!(adc.ids, exact.ids);
        assert!(!adc.clipped);
        assert!(adc.scores.windows(2).all(|w| w[0] <= w[1]));
    }

    #[test]
    fn single_dictionary_lossless_scan_equals_brute_force_on_originals() {
        let mut rng = crate::rng::stream_rng(11, "search-test-lossless");
        let rows: Vec<Vec<f64>> =
            (0..5).map(|_| (0..4).map(|_| rng.random::<f64>()).collect()).collect();
        let data = Dataset::from_rows(&rows).unwrap();
        // One dictionary whose elements are the points themselves.
        let tensor = Array3::from_shape_fn((1, 5, 4), |(_, k, d)| rows[k][d]);
        let model = QuantizerModel::new(
            Variant::Cq,
            CodebookSet::new(tensor).unwrap(),
            0.0,
            None,
            vec![],
        )
        .unwrap();
        let codes = Codes::from_rows(&(0..5).map(|i| vec![i as u32]).collect::<Vec<_>>()).unwrap();
        let q = random_query(4, 12);
        let table = build_distance_table(&model, q.view()).unwrap();
        let adc = adc_scan(&model, &table, &codes, 5).unwrap();
        let exact = exact_scan(&data, q.view(), 5).unwrap();
        assert_eq!(adc.ids, exact.ids);
    }

    #[test]
    fn ties_prefer_lower_ids_and_clipping_is_flagged() {
        let model = random_model(2, 3, 4, 13);
        // Rows 0 and 2 share a code, forcing an exact score tie.
        let codes = Codes::from_rows(&[vec![1, 2], vec![0, 0], vec![1, 2]]).unwrap();
        let q = random_query(4, 14);
        let table = build_distance_table(&model, q.view()).unwrap();
        let res = adc_scan(&model, &table, &codes, 10).unwrap();
        assert!(res.clipped);
        assert_eq!(res.ids.len(), 3);
        let pos0 = res.ids.iter().position(|&i| i == 0).unwrap();
        let pos2 = res.ids.iter().position(|&i| i == 2).unwrap();
        assert!(pos0 < pos2, "equal scores must order by id");
        assert!(adc_scan(&model, &table, &codes, 0).is_err());
    }

    #[test]
    fn reconstruction_scan_with_delta_matches_full_reconstruction_ranking() {
        let model = random_model(3, 4, 5, 15);
        let codes = random_codes(80, 3, 4, 16);
        let q = random_query(5, 17);
        let with_delta = reconstruction_scan(&model, q.view(), &codes, 80, true).unwrap();

        let recon_rows: Vec<Vec<f64>> = (0..codes.n())
            .map(|i| reconstruct(&model.codebooks, codes.row(i)).unwrap().to_vec())
            .collect();
        let recon = Dataset::from_rows(&recon_rows).unwrap();
        let exact = exact_scan(&recon, q.view(), 80).unwrap();
        assert_eq!(with_delta.ids, exact.ids);
        for (a, b) in with_delta.scores.iter().zip(exact.scores.iter()) {
            assert!((a - b).abs() <= 1e-9 * b.abs().max(1.0));
        }

        // For equal-δ models the δ-discarding mode changes nothing.
        let pq_like = {
            let mut tensor = Array3::zeros((2, 3, 4));
            let mut rng = crate::rng::stream_rng(18, "search-test");
            for ki in 0..3 {
                for di in 0..2 {
                    tensor[[0, ki, di]] = rng.random::<f64>();
                    tensor[[1, ki, di + 2]] = rng.random::<f64>();
                }
            }
            QuantizerModel::new(Variant::Pq, CodebookSet::new(tensor).unwrap(), 0.0, None, vec![])
                .unwrap()
        };
        let codes = random_codes(30, 2, 3, 19);
        let q = random_query(4, 20);
        let a = reconstruction_scan(&pq_like, q.view(), &codes, 30, true).unwrap();
        let b = reconstruction_scan(&pq_like, q.view(), &codes, 30, false).unwrap();
        assert_eq!(a.ids, b.ids);
    }

    #[test]
    fn inner_product_scan_is_scale_invariant_and_bounded() {
        let model = random_model(3, 4, 6, 21);
        let codes = random_codes(50, 3, 4, 22);
        let q = random_query(6, 23);
        let base = inner_product_scan(&model, q.view(), &codes, 10).unwrap();
        for s in [0.1, 3.0, 7.0] {
            let scaled = q.mapv(|v| v * s);
            let res = inner_product_scan(&model, scaled.view(), &codes, 10).unwrap();
            assert_eq!(res.ids, base.ids, "scaling by {s} changed the ranking");
        }
        assert!(base.scores.windows(2).all(|w| w[0] >= w[1]));

        // |⟨q,x⟩ - ⟨q,x̄⟩| ≤ ||x - x̄||·||q|| for arbitrary x.
        let mut rng = crate::rng::stream_rng(24, "search-test-bound");
        let qn = q.dot(&q).sqrt();
        for i in 0..codes.n() {
            let x = Array1::from_shape_fn(6, |_| rng.random::<f64>() * 2.0 - 1.0);
            let xbar = reconstruct(&model.codebooks, codes.row(i)).unwrap();
            let lhs = (q.dot(&x) - q.dot(&xbar)).abs();
            let diff = &x - &xbar;
            let rhs = diff.dot(&diff).sqrt() * qn;
            assert!(lhs <= rhs + 1e-9);
        }
    }

    #[test]
    fn compressed_query_search_is_exact_for_lossless_models() {
        let mut rng = crate::rng::stream_rng(25, "search-test-compress");
        let rows: Vec<Vec<f64>> =
            (0..6).map(|_| (0..3).map(|_| rng.random::<f64>()).collect()).collect();
        let tensor = Array3::from_shape_fn((1, 6, 3), |(_, k, d)| rows[k][d]);
        let model = QuantizerModel::new(
            Variant::Cq,
            CodebookSet::new(tensor).unwrap(),
            0.0,
            None,
            vec![],
        )
        .unwrap();
        let codes = Codes::from_rows(&(0..6).map(|i| vec![i as u32]).collect::<Vec<_>>()).unwrap();
        // The query is one of the representable points, so compression is
        // lossless and the result must match the uncompressed scan.
        let q = Array1::from_vec(rows[3].clone());
        let table = build_distance_table(&model, q.view()).unwrap();
        let plain = adc_scan(&model, &table, &codes, 6).unwrap();
        let compressed = compressed_query_search(&model, q.view(), &codes, 6).unwrap();
        assert_eq!(plain.ids, compressed.ids);
    }
}
