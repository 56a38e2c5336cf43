//! Inverted multi-index: a K×K grid of cells spanned by two half-space
//! coarse dictionaries, residual fine codes inside each cell, and a
//! lookup-only reranker.
//!
//! A base vector lands in the cell of its nearest coarse element per half
//! and is stored as `x ≈ c_{1i} + c_{2j} + Σ_m r_m`: the coarse pair plus a
//! fine code over the residual. Queries expand cells in nondecreasing coarse
//! distance (the multi-sequence order), then rerank candidates through the
//! expansion of `||q - x̂||²`:
//!
//! ```text
//! ||q||²                                   rank-neutral, skipped
//! + Σ_i ||c_i||²  + Σ_m ||r_m||²           stored element norms
//! - 2 Σ_i ⟨q, c_i⟩                         coarse products, two per query
//! - 2 Σ_m ⟨q, r_m⟩                         per-query fine table
//! + 2 Σ_i Σ_m ⟨c_i, r_m⟩                   offline cross tables
//! + 2⟨c_1, c_2⟩ + Σ_{m≠m'} ⟨r_m, r_m'⟩     dropped
//! ```
//!
//! The dropped line is exactly zero when the coarse halves are disjoint and
//! the fine model is orthogonal, and near-constant for the penalized fine
//! trainers; [`MultiIndex::dropped_terms`] exposes the actual values so the
//! spread can be measured instead of assumed.

use std::cmp::Reverse;
use std::collections::BinaryHeap;
use std::fs::File;
use std::io::{BufReader, BufWriter, Read, Write};
use std::path::Path;

use byteorder::{LittleEndian, ReadBytesExt, WriteBytesExt};
use ndarray::{s, Array1, Array2, Array4, ArrayView1};

use crate::baselines::train_pq;
use crate::data::Dataset;
use crate::error::{Error, Result};
use crate::model::{QuantizerModel, Variant};
use crate::quant::{
    cross_term_delta, pack_codes, packed_bytes_per_vector, reconstruct, unpack_codes,
    CodebookSet, Codes, IcmEncoder, InnerProductCache,
};
use crate::rng::stream_rng;
use crate::search::{top_r_scored, SearchResult, TableBuilder};
use crate::sparse::{train_snocq, SparseConfig};
use crate::trainers::{ckm_model, pq_model, train_cq, train_nocq, train_ocq, TrainConfig};

/// Coarse grid resolution that keeps K² cells manageable on one machine.
pub const DEFAULT_COARSE_K: usize = 64;

/// Build knobs: the fine trainer's configuration, optional sparse-trainer
/// overrides, and the residual sample cap for fine training.
#[derive(Debug, Clone, serde::Serialize, serde::Deserialize)]
pub struct IndexConfig {
    pub train: TrainConfig,
    /// Budget and L1 weight when the fine variant is the sparse one; `None`
    /// falls back to a K·D budget with no L1 stage.
    pub sparse: Option<SparseConfig>,
    /// Fine training runs on at most this many residuals; encoding always
    /// covers every point.
    pub residual_cap: usize,
}

impl Default for IndexConfig {
    fn default() -> Self {
        IndexConfig { train: TrainConfig::default(), sparse: None, residual_cap: 100_000 }
    }
}

/// The two half-space dictionaries. Elements are stored zero-padded to the
/// full dimension; `split` is where the first half ends.
#[derive(Debug, Clone)]
pub struct CoarseQuantizer {
    codebooks: CodebookSet,
    split: usize,
}

impl CoarseQuantizer {
    pub fn k(&self) -> usize {
        self.codebooks.k()
    }

    pub fn dim(&self) -> usize {
        self.codebooks.dim()
    }

    pub fn split(&self) -> usize {
        self.split
    }

    /// Distances of each query half to the matching dictionary:
    /// `d1[a] = ||q[..split] - c_1a||²`, `d2[b] = ||q[split..] - c_2b||²`.
    pub fn half_distances(&self, query: ArrayView1<f64>) -> Result<(Vec<f64>, Vec<f64>)> {
        if query.len() != self.dim() {
            return Err(Error::invalid(format!(
                "query dimension {} does not match index dimension {}",
                query.len(),
                self.dim()
            )));
        }
        if !query.iter().all(|v| v.is_finite()) {
            return Err(Error::invalid("query contains non-finite values"));
        }
        let k = self.k();
        let mut d1 = Vec::with_capacity(k);
        let mut d2 = Vec::with_capacity(k);
        for a in 0..k {
            let e = self.codebooks.element(0, a);
            let q = query.slice(s![..self.split]);
            let e = e.slice(s![..self.split]);
            d1.push(q.iter().zip(e.iter()).map(|(x, y)| (x - y) * (x - y)).sum());
        }
        for b in 0..k {
            let e = self.codebooks.element(1, b);
            let q = query.slice(s![self.split..]);
            let e = e.slice(s![self.split..]);
            d2.push(q.iter().zip(e.iter()).map(|(x, y)| (x - y) * (x - y)).sum());
        }
        Ok((d1, d2))
    }
}

/// One grid cell: base ids ascending and their fine codes, row-major with
/// `fine_m` indices per id.
#[derive(Debug, Clone, Default)]
struct Cell {
    ids: Vec<u32>,
    codes: Vec<u32>,
}

/// Read-only view of one cell's postings.
#[derive(Debug, Clone, Copy)]
pub struct CellView<'a> {
    ids: &'a [u32],
    codes: &'a [u32],
    m: usize,
}

impl<'a> CellView<'a> {
    pub fn len(&self) -> usize {
        self.ids.len()
    }

    pub fn is_empty(&self) -> bool {
        self.ids.is_empty()
    }

    pub fn ids(&self) -> &'a [u32] {
        self.ids
    }

    pub fn fine_code(&self, t: usize) -> &'a [u32] {
        &self.codes[t * self.m..(t + 1) * self.m]
    }

    pub fn iter(&self) -> impl Iterator<Item = (u32, &'a [u32])> + '_ {
        self.ids.iter().enumerate().map(|(t, &id)| (id, self.fine_code(t)))
    }
}

/// Cells in traversal order with their summed coarse distances.
#[derive(Debug, Clone, PartialEq)]
pub struct CellCursor {
    cells: Vec<(u32, u32)>,
    distances: Vec<f64>,
}

impl CellCursor {
    pub fn len(&self) -> usize {
        self.cells.len()
    }

    pub fn is_empty(&self) -> bool {
        self.cells.is_empty()
    }

    pub fn cell(&self, t: usize) -> (u32, u32) {
        self.cells[t]
    }

    pub fn distance(&self, t: usize) -> f64 {
        self.distances[t]
    }

    pub fn cells(&self) -> &[(u32, u32)] {
        &self.cells
    }

    pub fn distances(&self) -> &[f64] {
        &self.distances
    }
}

/// Heap entry of the traversal: summed distance first, then the raw code
/// pair so equal sums emit in (i, j) lexicographic order.
struct Frontier {
    sum: f64,
    cell: (u32, u32),
    ranks: (u32, u32),
}

impl PartialEq for Frontier {
    fn eq(&self, other: &Self) -> bool {
        self.cmp(other) == std::cmp::Ordering::Equal
    }
}

impl Eq for Frontier {}

impl Ord for Frontier {
    fn cmp(&self, other: &Self) -> std::cmp::Ordering {
        self.sum.total_cmp(&other.sum).then(self.cell.cmp(&other.cell))
    }
}

impl PartialOrd for Frontier {
    fn partial_cmp(&self, other: &Self) -> Option<std::cmp::Ordering> {
        Some(self.cmp(other))
    }
}

/// Lazy multi-sequence walk over the rank grid. Per-dictionary distances are
/// sorted once (ties by index); the frontier starts at (nearest, nearest) and
/// popping rank cell (a, b) pushes (a+1, b) and (a, b+1). Duplicates are
/// allowed in and discarded on pop.
struct CellStream<'a> {
    d1: &'a [f64],
    d2: &'a [f64],
    order1: Vec<u32>,
    order2: Vec<u32>,
    heap: BinaryHeap<Reverse<Frontier>>,
    popped: Vec<bool>,
}

impl<'a> CellStream<'a> {
    fn new(d1: &'a [f64], d2: &'a [f64]) -> Self {
        assert_eq!(d1.len(), d2.len(), "both dictionaries must share K");
        assert!(!d1.is_empty(), "distances must be non-empty");
        let sort = |d: &[f64]| {
            let mut order: Vec<u32> = (0..d.len() as u32).collect();
            order.sort_by(|&a, &b| {
                d[a as usize].total_cmp(&d[b as usize]).then(a.cmp(&b))
            });
            order
        };
        let k = d1.len();
        let mut stream = CellStream {
            d1,
            d2,
            order1: sort(d1),
            order2: sort(d2),
            heap: BinaryHeap::new(),
            popped: vec![false; k * k],
        };
        stream.push(0, 0);
        stream
    }

    fn push(&mut self, ra: usize, rb: usize) {
        let k = self.d1.len();
        if ra >= k || rb >= k {
            return;
        }
        let (i, j) = (self.order1[ra], self.order2[rb]);
        let sum = self.d1[i as usize] + self.d2[j as usize];
        self.heap.push(Reverse(Frontier { sum, cell: (i, j), ranks: (ra as u32, rb as u32) }));
    }

    fn next(&mut self) -> Option<((u32, u32), f64)> {
        let k = self.d1.len();
        while let Some(Reverse(e)) = self.heap.pop() {
            let flat = e.ranks.0 as usize * k + e.ranks.1 as usize;
            if self.popped[flat] {
                continue;
            }
            self.popped[flat] = true;
            self.push(e.ranks.0 as usize + 1, e.ranks.1 as usize);
            self.push(e.ranks.0 as usize, e.ranks.1 as usize + 1);
            return Some((e.cell, e.sum));
        }
        None
    }
}

/// Pure traversal over explicit per-dictionary distances; emits up to
/// `max_cells` cells (clamped at K²) in nondecreasing summed distance, equal
/// sums in (i, j) lexicographic order.
pub fn multi_sequence_order(d1: &[f64], d2: &[f64], max_cells: usize) -> CellCursor {
    let mut stream = CellStream::new(d1, d2);
    let cap = max_cells.min(d1.len() * d1.len());
    let mut cells = Vec::with_capacity(cap);
    let mut distances = Vec::with_capacity(cap);
    while cells.len() < cap {
        match stream.next() {
            Some((cell, sum)) => {
                cells.push(cell);
                distances.push(sum);
            }
            None => break,
        }
    }
    CellCursor { cells, distances }
}

/// Cell emission order for a query against a coarse pair.
pub fn multi_sequence(
    query: ArrayView1<f64>,
    coarse: &CoarseQuantizer,
    max_cells: usize,
) -> Result<CellCursor> {
    let (d1, d2) = coarse.half_distances(query)?;
    Ok(multi_sequence_order(&d1, &d2, max_cells))
}

/// The built index: coarse pair, fine residual model, cell postings, and the
/// precomputed norm and cross-product tables the reranker reads.
#[derive(Debug, Clone)]
pub struct MultiIndex {
    coarse: CoarseQuantizer,
    fine_model: QuantizerModel,
    cells: Vec<Cell>,
    n: usize,
    coarse_norms: Array2<f64>,
    fine_norms: Array2<f64>,
    /// `⟨c_{h,a}, r_{m,b}⟩` indexed `[h, a, m, b]`.
    cross_coarse_fine: Array4<f64>,
    /// `⟨c_{1,a}, c_{2,b}⟩`; identically zero for the half-split coarse pair
    /// but stored so the dropped terms can be reported exactly.
    cross_coarse_coarse: Array2<f64>,
}

/// Trains the coarse pair as a two-dictionary half-split quantizer, encodes
/// every residual with the chosen fine variant, and fills the cell grid.
pub fn build_multi_index(
    data: &Dataset,
    coarse_k: usize,
    fine_m: usize,
    fine_k: usize,
    fine_variant: Variant,
    config: &IndexConfig,
) -> Result<MultiIndex> {
    config.train.validate()?;
    if config.residual_cap == 0 {
        return Err(Error::invalid("residual_cap must be at least 1"));
    }
    let seed = config.train.seed;
    let coarse_pq = train_pq(data, 2, coarse_k, config.train.kmeans_iters, seed)?;
    let split = coarse_pq.layout.span(0).end;

    let mut residuals = data.view().to_owned();
    for i in 0..data.n() {
        let code = coarse_pq.codes.row(i);
        let mut row = residuals.row_mut(i);
        row.zip_mut_with(&coarse_pq.codebooks.element(0, code[0] as usize), |r, c| *r -= c);
        row.zip_mut_with(&coarse_pq.codebooks.element(1, code[1] as usize), |r, c| *r -= c);
    }
    let residual_all = Dataset::from_array(residuals)?;

    let train_set = if residual_all.n() > config.residual_cap {
        let mut rng = stream_rng(seed, "multi-index-residual-sample");
        let mut ids = rand::seq::index::sample(&mut rng, residual_all.n(), config.residual_cap)
            .into_vec();
        ids.sort_unstable();
        residual_all.subset(&ids)?
    } else {
        residual_all.clone()
    };

    let (fine_model, encode_mu) = match fine_variant {
        Variant::Pq => (pq_model(&train_set, fine_m, fine_k, &config.train)?.model, 0.0),
        Variant::Ckm => (ckm_model(&train_set, fine_m, fine_k, &config.train)?.model, 0.0),
        Variant::Cq => (train_cq(&train_set, fine_m, fine_k, &config.train)?.model, 0.0),
        Variant::Ocq => (train_ocq(&train_set, fine_m, fine_k, &config.train)?.model, 0.0),
        Variant::Nocq => {
            (train_nocq(&train_set, fine_m, fine_k, &config.train)?.model, config.train.mu)
        }
        Variant::Snocq => {
            let cfg = config.sparse.clone().unwrap_or_else(|| SparseConfig {
                s_budget: fine_k * data.dim(),
                lambda: 0.0,
                base: config.train.clone(),
            });
            let mu = cfg.base.mu;
            (train_snocq(&train_set, fine_m, fine_k, &cfg)?.model, mu)
        }
    };

    let encoder = IcmEncoder::new(
        &fine_model.codebooks,
        encode_mu,
        fine_model.epsilon,
        config.train.icm_sweeps,
    )?;
    let fine_codes = encoder.encode_dataset(&residual_all, None)?;

    let mut cells: Vec<Cell> = (0..coarse_k * coarse_k).map(|_| Cell::default()).collect();
    for i in 0..data.n() {
        let cc = coarse_pq.codes.row(i);
        let cell = &mut cells[cc[0] as usize * coarse_k + cc[1] as usize];
        cell.ids.push(i as u32);
        cell.codes.extend_from_slice(fine_codes.row(i));
    }

    MultiIndex::assemble(
        CoarseQuantizer { codebooks: coarse_pq.codebooks, split },
        fine_model,
        cells,
        data.n(),
    )
}

impl MultiIndex {
    /// Validates the parts and derives the norm and cross tables. Shared by
    /// the builder and the file reader, so a loaded index satisfies exactly
    /// the invariants a built one does.
    fn assemble(
        coarse: CoarseQuantizer,
        fine_model: QuantizerModel,
        cells: Vec<Cell>,
        n: usize,
    ) -> Result<MultiIndex> {
        if coarse.codebooks.m() != 2 {
            return Err(Error::invalid("the coarse structure needs exactly two dictionaries"));
        }
        if coarse.split == 0 || coarse.split >= coarse.dim() {
            return Err(Error::invalid("the half split must leave both halves non-empty"));
        }
        if fine_model.dim() != coarse.dim() {
            return Err(Error::invalid("fine model dimension does not match the coarse pair"));
        }
        let kc = coarse.k();
        if cells.len() != kc * kc {
            return Err(Error::corrupt(format!(
                "expected {} cells, got {}",
                kc * kc,
                cells.len()
            )));
        }
        let (fm, fk) = (fine_model.m(), fine_model.k());
        let mut seen = vec![false; n];
        let mut total = 0usize;
        for cell in &cells {
            if cell.codes.len() != cell.ids.len() * fm {
                return Err(Error::corrupt("cell code block does not match its id count"));
            }
            let mut prev = None;
            for &id in &cell.ids {
                if id as usize >= n {
                    return Err(Error::corrupt(format!("cell id {id} out of range")));
                }
                if prev.is_some_and(|p: u32| p >= id) {
                    return Err(Error::corrupt("cell ids must strictly ascend"));
                }
                if seen[id as usize] {
                    return Err(Error::corrupt(format!("id {id} appears in two cells")));
                }
                seen[id as usize] = true;
                prev = Some(id);
            }
            if cell.codes.iter().any(|&c| c as usize >= fk) {
                return Err(Error::corrupt("fine code index out of dictionary range"));
            }
            total += cell.ids.len();
        }
        if total != n {
            return Err(Error::corrupt(format!("cells hold {total} ids, index claims {n}")));
        }

        let coarse_norms = coarse.codebooks.element_norms();
        let fine_norms = fine_model.codebooks.element_norms();
        let mut cross_coarse_fine = Array4::zeros((2, kc, fm, fk));
        for h in 0..2 {
            for a in 0..kc {
                let ce = coarse.codebooks.element(h, a);
                for m in 0..fm {
                    for b in 0..fk {
                        cross_coarse_fine[[h, a, m, b]] =
                            ce.dot(&fine_model.codebooks.element(m, b));
                    }
                }
            }
        }
        let mut cross_coarse_coarse = Array2::zeros((kc, kc));
        for a in 0..kc {
            let e1 = coarse.codebooks.element(0, a);
            for b in 0..kc {
                cross_coarse_coarse[[a, b]] = e1.dot(&coarse.codebooks.element(1, b));
            }
        }
        Ok(MultiIndex {
            coarse,
            fine_model,
            cells,
            n,
            coarse_norms,
            fine_norms,
            cross_coarse_fine,
            cross_coarse_coarse,
        })
    }

    pub fn n(&self) -> usize {
        self.n
    }

    pub fn dim(&self) -> usize {
        self.coarse.dim()
    }

    pub fn coarse_k(&self) -> usize {
        self.coarse.k()
    }

    pub fn coarse(&self) -> &CoarseQuantizer {
        &self.coarse
    }

    pub fn fine_model(&self) -> &QuantizerModel {
        &self.fine_model
    }

    pub fn cell(&self, i: u32, j: u32) -> Result<CellView<'_>> {
        let kc = self.coarse_k();
        if i as usize >= kc || j as usize >= kc {
            return Err(Error::corrupt(format!("cell ({i}, {j}) outside the {kc}x{kc} grid")));
        }
        let cell = &self.cells[i as usize * kc + j as usize];
        Ok(CellView { ids: &cell.ids, codes: &cell.codes, m: self.fine_model.m() })
    }

    /// Cell and fine code of one base id; a grid scan, meant for inspection
    /// and oracles rather than the query path.
    pub fn locate(&self, id: u32) -> Option<((u32, u32), &[u32])> {
        let kc = self.coarse_k();
        let fm = self.fine_model.m();
        for (flat, cell) in self.cells.iter().enumerate() {
            if let Ok(t) = cell.ids.binary_search(&id) {
                let pos = ((flat / kc) as u32, (flat % kc) as u32);
                return Some((pos, &cell.codes[t * fm..(t + 1) * fm]));
            }
        }
        None
    }

    /// `x̂ = c_{1i} + c_{2j} + Σ_m r_m`, the reranker's implicit candidate.
    pub fn reconstruct_candidate(&self, cell: (u32, u32), fine_code: &[u32]) -> Result<Array1<f64>> {
        let kc = self.coarse_k();
        if cell.0 as usize >= kc || cell.1 as usize >= kc {
            return Err(Error::corrupt("cell outside the grid"));
        }
        let mut x = reconstruct(&self.fine_model.codebooks, fine_code)?;
        x.zip_mut_with(&self.coarse.codebooks.element(0, cell.0 as usize), |r, c| *r += c);
        x.zip_mut_with(&self.coarse.codebooks.element(1, cell.1 as usize), |r, c| *r += c);
        Ok(x)
    }

    /// The two expansion terms the reranker omits: `2⟨c_1, c_2⟩` and the
    /// fine cross term `Σ_{m≠m'} ⟨r_m, r_m'⟩`.
    pub fn dropped_terms(&self, cell: (u32, u32), fine_code: &[u32]) -> Result<(f64, f64)> {
        let kc = self.coarse_k();
        if cell.0 as usize >= kc || cell.1 as usize >= kc {
            return Err(Error::corrupt("cell outside the grid"));
        }
        let coarse_pair = 2.0 * self.cross_coarse_coarse[[cell.0 as usize, cell.1 as usize]];
        let fine_delta = cross_term_delta(&self.fine_model.codebooks, fine_code, None)?;
        Ok((coarse_pair, fine_delta))
    }

    /// (min, mean, max) of the omitted terms across every candidate in the
    /// cursor; `None` when the cells are all empty. A tight spread is what
    /// justifies dropping them from the ranking.
    pub fn dropped_term_spread(&self, candidates: &CellCursor) -> Result<Option<(f64, f64, f64)>> {
        let cache = InnerProductCache::build(&self.fine_model.codebooks);
        let mut min = f64::INFINITY;
        let mut max = f64::NEG_INFINITY;
        let mut sum = 0.0;
        let mut count = 0usize;
        for t in 0..candidates.len() {
            let (i, j) = candidates.cell(t);
            let view = self.cell(i, j)?;
            let coarse_pair = 2.0 * self.cross_coarse_coarse[[i as usize, j as usize]];
            for (_, code) in view.iter() {
                let v =
                    coarse_pair + cross_term_delta(&self.fine_model.codebooks, code, Some(&cache))?;
                min = min.min(v);
                max = max.max(v);
                sum += v;
                count += 1;
            }
        }
        if count == 0 {
            return Ok(None);
        }
        Ok(Some((min, sum / count as f64, max)))
    }

    /// Traverses cells until at least `l` candidates are gathered (or the
    /// grid is exhausted), then reranks them for the top `r`.
    pub fn search(&self, query: ArrayView1<f64>, l: usize, r: usize) -> Result<SearchResult> {
        if l == 0 {
            return Err(Error::invalid("candidate budget l must be at least 1"));
        }
        let (d1, d2) = self.coarse.half_distances(query)?;
        let mut stream = CellStream::new(&d1, &d2);
        let kc = self.coarse_k();
        let mut cells = Vec::new();
        let mut distances = Vec::new();
        let mut gathered = 0usize;
        while gathered < l {
            match stream.next() {
                Some(((i, j), sum)) => {
                    gathered += self.cells[i as usize * kc + j as usize].ids.len();
                    cells.push((i, j));
                    distances.push(sum);
                }
                None => break,
            }
        }
        rerank_multi_d_adc(self, query, &CellCursor { cells, distances }, r)
    }

    /// Writes the `VQMI` container:
    ///
    /// ```text
    /// magic    4 bytes  "VQMI", then version u8 = 1
    /// header   u32 coarse_k, u32 split, u64 n
    /// coarse   embedded VQM1 model block (two dictionaries)
    /// fine     embedded VQM1 model block
    /// cells    K² postings row-major: varint count, ids as varint deltas
    ///          (first absolute, strictly ascending), packed fine codes
    /// ```
    ///
    /// Norm and cross tables are derived data and are rebuilt on read.
    pub fn write(&self, path: &Path) -> Result<()> {
        let mut w = BufWriter::new(File::create(path)?);
        w.write_all(b"VQMI")?;
        w.write_u8(1)?;
        w.write_u32::<LittleEndian>(self.coarse_k() as u32)?;
        w.write_u32::<LittleEndian>(self.coarse.split as u32)?;
        w.write_u64::<LittleEndian>(self.n as u64)?;
        let coarse_model =
            QuantizerModel::new(Variant::Pq, self.coarse.codebooks.clone(), 0.0, None, vec![])?;
        coarse_model.write_to(&mut w)?;
        self.fine_model.write_to(&mut w)?;
        let (fm, fk) = (self.fine_model.m(), self.fine_model.k());
        for cell in &self.cells {
            write_varint(&mut w, cell.ids.len() as u64)?;
            let mut prev = 0u64;
            for (t, &id) in cell.ids.iter().enumerate() {
                let id = id as u64;
                write_varint(&mut w, if t == 0 { id } else { id - prev })?;
                prev = id;
            }
            if !cell.ids.is_empty() {
                let rows = Array2::from_shape_vec((cell.ids.len(), fm), cell.codes.clone())
                    .map_err(|e| Error::invalid(e.to_string()))?;
                w.write_all(&pack_codes(&Codes::new(rows)?, fk)?)?;
            }
        }
        w.flush()?;
        Ok(())
    }

    pub fn read(path: &Path) -> Result<MultiIndex> {
        let mut r = BufReader::new(File::open(path)?);
        let mut magic = [0u8; 4];
        r.read_exact(&mut magic)
            .map_err(|_| Error::format("index file shorter than its magic"))?;
        if &magic != b"VQMI" {
            return Err(Error::format(format!("bad magic {magic:?}, expected VQMI")));
        }
        match r.read_u8()? {
            1 => {}
            v => return Err(Error::format(format!("unsupported index version {v}"))),
        }
        let coarse_k = r.read_u32::<LittleEndian>()? as usize;
        let split = r.read_u32::<LittleEndian>()? as usize;
        let n = r.read_u64::<LittleEndian>()?;
        if n > u32::MAX as u64 {
            return Err(Error::format("index holds more ids than fit in u32"));
        }
        let n = n as usize;
        let coarse_model = QuantizerModel::read_from(&mut r)?;
        if coarse_model.k() != coarse_k {
            return Err(Error::format("coarse model K disagrees with the header"));
        }
        let fine_model = QuantizerModel::read_from(&mut r)?;
        let (fm, fk) = (fine_model.m(), fine_model.k());
        let per_vec = packed_bytes_per_vector(fm, fk);
        let mut cells = Vec::with_capacity(coarse_k * coarse_k);
        for _ in 0..coarse_k * coarse_k {
            let count = read_varint(&mut r)? as usize;
            if count > n {
                return Err(Error::format(format!("cell claims {count} ids, index has {n}")));
            }
            let mut ids = Vec::with_capacity(count);
            let mut prev = 0u64;
            for t in 0..count {
                let delta = read_varint(&mut r)?;
                let id = if t == 0 { delta } else { prev + delta };
                if id > u32::MAX as u64 {
                    return Err(Error::format("cell id overflows u32"));
                }
                ids.push(id as u32);
                prev = id;
            }
            let codes = if count == 0 {
                Vec::new()
            } else {
                let mut bytes = vec![0u8; count * per_vec];
                r.read_exact(&mut bytes)
                    .map_err(|_| Error::format("index file truncated inside a cell"))?;
                let codes = unpack_codes(&bytes, count, fm, fk)?;
                (0..count).flat_map(|t| codes.row(t).to_vec()).collect()
            };
            cells.push(Cell { ids, codes });
        }
        let mut rest = Vec::new();
        r.read_to_end(&mut rest)?;
        if !rest.is_empty() {
            return Err(Error::format(format!("{} trailing bytes after index", rest.len())));
        }
        MultiIndex::assemble(
            CoarseQuantizer { codebooks: coarse_model.codebooks, split },
            fine_model,
            cells,
            n,
        )
    }
}

/// Scores every candidate in the cursor's cells through the stored tables
/// (no vector is reconstructed) and keeps the top r by ascending score. Add
/// `||q||²` and the dropped terms to a score to recover the exact squared
/// distance to that candidate's reconstruction.
pub fn rerank_multi_d_adc(
    index: &MultiIndex,
    query: ArrayView1<f64>,
    candidates: &CellCursor,
    r: usize,
) -> Result<SearchResult> {
    let fine_table = TableBuilder::new(&index.fine_model).inner_product_table(query)?;
    let kc = index.coarse_k();
    let mut coarse_ip = Array2::zeros((2, kc));
    for h in 0..2 {
        for a in 0..kc {
            coarse_ip[[h, a]] = query.dot(&index.coarse.codebooks.element(h, a));
        }
    }
    let fm = index.fine_model.m();

    let mut total = 0usize;
    for t in 0..candidates.len() {
        let (i, j) = candidates.cell(t);
        if i as usize >= kc || j as usize >= kc {
            return Err(Error::corrupt(format!(
                "candidate cell ({i}, {j}) outside the {kc}x{kc} grid"
            )));
        }
        total += index.cells[i as usize * kc + j as usize].ids.len();
    }

    let mut scored = Vec::with_capacity(total);
    for t in 0..candidates.len() {
        let (i, j) = candidates.cell(t);
        let (iu, ju) = (i as usize, j as usize);
        let cell = &index.cells[iu * kc + ju];
        let cell_base = index.coarse_norms[[0, iu]] + index.coarse_norms[[1, ju]]
            - 2.0 * (coarse_ip[[0, iu]] + coarse_ip[[1, ju]]);
        for (t_pt, &id) in cell.ids.iter().enumerate() {
            let code = &cell.codes[t_pt * fm..(t_pt + 1) * fm];
            let mut score = cell_base;
            for (m, &b) in code.iter().enumerate() {
                let b = b as usize;
                score += index.fine_norms[[m, b]] - 2.0 * fine_table.entry(m, b)
                    + 2.0 * (index.cross_coarse_fine[[0, iu, m, b]]
                        + index.cross_coarse_fine[[1, ju, m, b]]);
            }
            scored.push((id, score));
        }
    }
    top_r_scored(scored.into_iter(), total, r, false)
}

fn write_varint<W: Write>(w: &mut W, mut v: u64) -> Result<()> {
    loop {
        let byte = (v & 0x7f) as u8;
        v >>= 7;
        if v == 0 {
            w.write_u8(byte)?;
            return Ok(());
        }
        w.write_u8(byte | 0x80)?;
    }
}

fn read_varint<R: Read>(r: &mut R) -> Result<u64> {
    let mut v = 0u64;
    for i in 0..10 {
        let b = r.read_u8()?;
        let low = (b & 0x7f) as u64;
        if i == 9 && low > 1 {
            return Err(Error::format("varint overflows u64"));
        }
        v |= low << (7 * i);
        if b & 0x80 == 0 {
            return Ok(v);
        }
    }
    Err(Error::format("varint runs past ten bytes"))
}
