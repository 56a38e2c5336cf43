//! Argument surface, one struct per subcommand.

use std::path::PathBuf;
use std::str::FromStr;

use clap::{Parser, Subcommand};
use vqann_core::data::Metric;
use vqann_core::model::Variant;

/// A penalty weight that is either fixed or validated by a held-out sweep.
#[derive(Debug, Clone, Copy, PartialEq)]
pub enum Weight {
    Auto,
    Fixed(f64),
}

impl Weight {
    pub fn fixed_or(&self, auto_unsupported: &str) -> Result<f64, String> {
        match self {
            Weight::Fixed(v) => Ok(*v),
            Weight::Auto => Err(auto_unsupported.to_string()),
        }
    }
}

impl FromStr for Weight {
    type Err = String;

    fn from_str(s: &str) -> Result<Self, Self::Err> {
        if s == "auto" {
            return Ok(Weight::Auto);
        }
        let v: f64 = s.parse().map_err(|_| format!("expected a number or \"auto\", got {s:?}"))?;
        if !v.is_finite() || v < 0.0 {
            return Err(format!("weight must be finite and non-negative, got {s}"));
        }
        Ok(Weight::Fixed(v))
    }
}

impl std::fmt::Display for Weight {
    fn fmt(&self, f: &mut std::fmt::Formatter<'_>) -> std::fmt::Result {
        match self {
            Weight::Auto => f.write_str("auto"),
            Weight::Fixed(v) => write!(f, "{v}"),
        }
    }
}

fn parse_metric(s: &str) -> Result<Metric, String> {
    match s {
        "euclidean" => Ok(Metric::SquaredL2),
        "inner-product" => Ok(Metric::InnerProduct),
        other => Err(format!("unknown metric {other:?} (euclidean, inner-product)")),
    }
}

#[derive(Debug, Parser)]
#[command(name = "vqann", version, about = "Compact-coding vector search toolkit")]
pub struct Cli {
    /// Worker threads for the whole process. Output is identical for any
    /// value; 1 is the sequential reference mode.
    #[arg(long, global = true)]
    pub threads: Option<usize>,

    #[command(subcommand)]
    pub command: Command,
}

#[derive(Debug, Subcommand)]
pub enum Command {
    /// Generate a synthetic cluster mixture as an .fvecs file.
    Synth(SynthArgs),
    /// Compute exact nearest neighbors as an .ivecs file.
    Groundtruth(GroundtruthArgs),
    /// Fit a quantizer and write the model file.
    Train(TrainArgs),
    /// Compress a base set against a trained model.
    Encode(EncodeArgs),
    /// Query an encoded base set, printing per-query results.
    Search(SearchArgs),
    /// Score an encoded base set against ground truth as CSV.
    Eval(EvalArgs),
    /// Run the standing multi-variant comparison on synthetic data.
    Bench(BenchArgs),
}

#[derive(Debug, Parser)]
pub struct SynthArgs {
    #[arg(long)]
    pub n: usize,
    #[arg(long)]
    pub dim: usize,
    #[arg(long, default_value_t = 50)]
    pub clusters: usize,
    /// Gaussian noise scale around each cluster center.
    #[arg(long, default_value_t = 0.12)]
    pub spread: f64,
    #[arg(long, default_value_t = 0)]
    pub seed: u64,
    /// Output path; .fvecs or .bvecs by extension.
    #[arg(long)]
    pub out: PathBuf,
}

#[derive(Debug, Parser)]
pub struct GroundtruthArgs {
    /// Base vectors (.fvecs/.bvecs).
    pub base: PathBuf,
    #[arg(long)]
    pub queries: PathBuf,
    /// Neighbors kept per query.
    #[arg(long, default_value_t = 100)]
    pub depth: usize,
    #[arg(long, default_value = "euclidean", value_parser = parse_metric)]
    pub metric: Metric,
    #[arg(long)]
    pub out: PathBuf,
}

#[derive(Debug, Parser)]
pub struct TrainArgs {
    /// Training vectors (.fvecs/.bvecs), resolved against VQANN_DATA_DIR.
    pub data: PathBuf,
    #[arg(long)]
    pub variant: Variant,
    /// Dictionaries per vector.
    #[arg(long)]
    pub m: usize,
    /// Elements per dictionary.
    #[arg(long)]
    pub k: Option<usize>,
    /// Code length in bits; stands in for --k via bits = m·log2(k).
    #[arg(long)]
    pub bits: Option<usize>,
    /// Cross-term penalty weight, or "auto" for the validated sweep
    /// (nocq only). Ignored by pq/ckm/cq.
    #[arg(long, default_value = "0")]
    pub mu: Weight,
    /// Sparsity trade-off for snocq, or "auto" for the validated sweep.
    #[arg(long, default_value = "0")]
    pub lambda: Weight,
    /// Nonzero dictionary budget for snocq; defaults to K·D.
    #[arg(long)]
    pub s_budget: Option<usize>,
    #[arg(long, default_value_t = 0)]
    pub seed: u64,
    /// Outer training alternations.
    #[arg(long, default_value_t = 30)]
    pub iters: usize,
    /// Lloyd iterations in the warm start.
    #[arg(long, default_value_t = 25)]
    pub kmeans_iters: usize,
    /// Model output path; defaults to <variant>.vqm1.
    #[arg(long)]
    pub out: Option<PathBuf>,
}

#[derive(Debug, Parser)]
pub struct EncodeArgs {
    /// Vectors to compress (.fvecs/.bvecs).
    pub data: PathBuf,
    #[arg(long)]
    pub model: PathBuf,
    /// Cross-term penalty weight during encoding; pass the training μ to
    /// keep new codes' cross terms pinned to ε, 0 for best reconstruction.
    #[arg(long, default_value_t = 0.0)]
    pub mu: f64,
    /// Coordinate-descent sweeps per vector.
    #[arg(long, default_value_t = 3)]
    pub sweeps: usize,
    /// Codes output path; defaults to the data file name with .vqc1.
    #[arg(long)]
    pub out: Option<PathBuf>,
}

#[derive(Debug, Parser)]
pub struct SearchArgs {
    /// Query vectors (.fvecs/.bvecs).
    pub queries: PathBuf,
    #[arg(long)]
    pub model: PathBuf,
    #[arg(long)]
    pub codes: PathBuf,
    /// Results per query.
    #[arg(long, default_value_t = 10)]
    pub r: usize,
    /// Quantize the query itself before scanning (cheaper tables, one extra
    /// approximation).
    #[arg(long)]
    pub compressed_query: bool,
    /// CSV output path; stdout when absent.
    #[arg(long)]
    pub out: Option<PathBuf>,
}

#[derive(Debug, Parser)]
pub struct EvalArgs {
    /// Query vectors (.fvecs/.bvecs).
    pub queries: PathBuf,
    #[arg(long)]
    pub model: PathBuf,
    #[arg(long)]
    pub codes: PathBuf,
    /// Exact neighbors (.ivecs), at least 100 deep.
    #[arg(long)]
    pub gt: PathBuf,
    /// Method label in the CSV; defaults to the model variant.
    #[arg(long)]
    pub method: Option<String>,
    /// Recall CSV path; the MAP table lands next to it as <stem>-map.csv.
    /// Both print to stdout when absent.
    #[arg(long)]
    pub out: Option<PathBuf>,
}

#[derive(Debug, Parser)]
pub struct BenchArgs {
    /// desk (the standing comparison) or smoke (seconds-long shakeout).
    #[arg(long, default_value = "desk")]
    pub preset: String,
    /// Replaces the preset's seed list with this single seed.
    #[arg(long)]
    pub seed: Option<u64>,
    /// Directory for summary.txt, recall.csv, map.csv and the manifest;
    /// stdout only when absent.
    #[arg(long)]
    pub out: Option<PathBuf>,
}
