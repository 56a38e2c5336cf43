//! Datasets, ground truth, and the file formats both travel in.
//!
//! Vectors are held row-major as `f64` regardless of on-disk precision; the
//! `.fvecs` / `.bvecs` / `.ivecs` payload types (f32, u8, i32) all embed into
//! f64 exactly, so reading is lossless and writing only has to re-check range.

mod groundtruth;
mod synth;
mod vecs;

pub use groundtruth::brute_force_groundtruth;
pub use synth::synth_mixture;
pub use vecs::{read_vecs, write_vecs, VecsKind};

use crate::error::{Error, Result};
use ndarray::{Array2, ArrayView1, ArrayView2};

/// Distance convention for ground truth and search.
#[derive(Debug, Clone, Copy, PartialEq, Eq, serde::Serialize, serde::Deserialize)]
pub enum Metric {
    /// Squared Euclidean distance, smaller is closer.
    SquaredL2,
    /// Inner product, larger is closer.
    InnerProduct,
}

/// A dense set of vectors, one per row.
#[derive(Debug, Clone, PartialEq)]
pub struct Dataset {
    vectors: Array2<f64>,
}

impl Dataset {
    /// Wraps a row-major matrix. Rejects empty shapes and non-finite entries.
    pub fn from_array(vectors: Array2<f64>) -> Result<Self> {
        if vectors.nrows() == 0 || vectors.ncols() == 0 {
            return Err(Error::invalid(format!(
                "dataset must be non-empty, got {} x {}",
                vectors.nrows(),
                vectors.ncols()
            )));
        }
        if !vectors.iter().all(|v| v.is_finite()) {
            return Err(Error::invalid("dataset contains non-finite values"));
        }
        Ok(Dataset { vectors })
    }

    /// Convenience constructor for literal rows.
    pub fn from_rows(rows: &[Vec<f64>]) -> Result<Self> {
        if rows.is_empty() {
            return Err(Error::invalid("dataset must contain at least one row"));
        }
        let d = rows[0].len();
        if rows.iter().any(|r| r.len() != d) {
            return Err(Error::invalid("rows must share one dimension"));
        }
        let flat: Vec<f64> = rows.iter().flatten().copied().collect();
        let arr = Array2::from_shape_vec((rows.len(), d), flat)
            .map_err(|e| Error::invalid(e.to_string()))?;
        Self::from_array(arr)
    }

    pub fn n(&self) -> usize {
        self.vectors.nrows()
    }

    pub fn dim(&self) -> usize {
        self.vectors.ncols()
    }

    pub fn row(&self, i: usize) -> ArrayView1<'_, f64> {
        self.vectors.row(i)
    }

    pub fn view(&self) -> ArrayView2<'_, f64> {
        self.vectors.view()
    }

    /// New dataset containing `ids` rows in the given order.
    pub fn subset(&self, ids: &[usize]) -> Result<Self> {
        if ids.iter().any(|&i| i >= self.n()) {
            return Err(Error::invalid("subset id out of range"));
        }
        let mut out = Array2::zeros((ids.len(), self.dim()));
        for (r, &i) in ids.iter().enumerate() {
            out.row_mut(r).assign(&self.vectors.row(i));
        }
        Self::from_array(out)
    }
}

/// True nearest neighbors per query, closest first.
#[derive(Debug, Clone, PartialEq, Eq)]
pub struct GroundTruth {
    neighbors: Vec<Vec<u32>>,
}

impl GroundTruth {
    pub fn new(neighbors: Vec<Vec<u32>>) -> Result<Self> {
        if neighbors.is_empty() {
            return Err(Error::invalid("ground truth must cover at least one query"));
        }
        let t = neighbors[0].len();
        if t == 0 || neighbors.iter().any(|r| r.len() != t) {
            return Err(Error::invalid("ground truth rows must share one positive length"));
        }
        Ok(GroundTruth { neighbors })
    }

    pub fn n_queries(&self) -> usize {
        self.neighbors.len()
    }

    /// Number of stored neighbors per query.
    pub fn depth(&self) -> usize {
        self.neighbors[0].len()
    }

    pub fn row(&self, q: usize) -> &[u32] {
        &self.neighbors[q]
    }

    /// Stores the id lists as `.ivecs` records.
    pub fn write_ivecs(&self, path: &std::path::Path) -> Result<()> {
        let rows: Vec<Vec<f64>> = self
            .neighbors
            .iter()
            .map(|r| r.iter().map(|&v| f64::from(v)).collect())
            .collect();
        write_vecs(&Dataset::from_rows(&rows)?, path, VecsKind::I32)
    }

    pub fn read_ivecs(path: &std::path::Path) -> Result<Self> {
        let ds = read_vecs(path, VecsKind::I32)?;
        let mut neighbors = Vec::with_capacity(ds.n());
        for i in 0..ds.n() {
            let row: Vec<u32> = ds
                .row(i)
                .iter()
                .map(|&v| {
                    if v < 0.0 || v > f64::from(u32::MAX) {
                        Err(Error::format(format!("neighbor id {v} out of range")))
                    } else {
                        Ok(v as u32)
                    }
                })
                .collect::<Result<_>>()?;
            neighbors.push(row);
        }
        GroundTruth::new(neighbors)
    }
}

#[cfg(test)]
mod tests {
    use super::*;

    #[test]
    fn dataset_rejects_empty_and_non_finite() {
        assert!(Dataset::from_rows(&[]).is_err());
        assert!(Dataset::from_rows(&[vec![]]).is_err());
        assert!(Dataset::from_rows(&[vec![1.0, f64::NAN]]).is_err());
        assert!(Dataset::from_rows(&[vec![1.0], vec![1.0, 2.0]]).is_err());
    }

    #[test]
    fn subset_preserves_order() {
        let ds = Dataset::from_rows(&[vec![0.0], vec![1.0], vec![2.0]]).unwrap();
        let sub = ds.subset(&[2, 0]).unwrap();
        assert_eq!(sub.row(0)[0], 2.0);
        assert_eq!(sub.row(1)[0], 0.0);
        assert!(ds.subset(&[3]).is_err());
    }

    #[test]
    fn ground_truth_shape_checks() {
        assert!(GroundTruth::new(vec![]).is_err());
        assert!(GroundTruth::new(vec![vec![]]).is_err());
        assert!(GroundTruth::new(vec![vec![0], vec![0, 1]]).is_err());
        let gt = GroundTruth::new(vec![vec![3, 1], vec![0, 2]]).unwrap();
        assert_eq!(gt.n_queries(), 2);
        assert_eq!(gt.depth(), 2);
        assert_eq!(gt.row(1), &[0, 2]);
    }
}
