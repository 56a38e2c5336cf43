//! Compact-coding toolkit for approximate nearest neighbor search.
//!
//! Vectors are approximated as sums of dictionary elements, one element per
//! dictionary. The crate provides the full pipeline around that idea:
//!
//! * [`data`] — vector file I/O, synthetic mixtures, exact ground truth.
//! * [`solvers`] — k-means and limited-memory BFGS used by the trainers.
//! * [`quant`] — codebooks, codes, cross terms, ICM encoding, code packing.
//! * [`baselines`] — product quantization and its rotated variant.
//! * [`model`] — the trained-model container and its on-disk format.
//! * [`trainers`] — composite quantization with and without the
//!   near-orthogonality penalty, plus penalty-weight selection.
//! * [`sparse`] — the sparse dictionary variant with an L1 stage and a
//!   fixed-support refit.
//! * [`search`] — lookup-table scans, exact-reconstruction reranking, and
//!   evaluation metrics.
//! * [`multi_index`] — a two-dictionary inverted multi-index with
//!   lookup-based reranking.
//! * [`benchmark`] — the desk-scale benchmark preset the CLI exposes.

pub mod baselines;
pub mod benchmark;
pub mod data;
pub mod error;
pub mod model;
pub mod multi_index;
pub(crate) mod par;
pub mod quant;
pub mod rng;
pub mod search;
pub mod solvers;
pub mod sparse;
pub mod trainers;

pub use error::{Error, Result};
