//! Shared numerical building blocks: Lloyd's k-means and limited-memory BFGS.

mod kmeans;
mod lbfgs;

pub use kmeans::{kmeans, KMeansResult};
pub use lbfgs::{lbfgs_minimize, LbfgsConfig, LbfgsOutcome};
