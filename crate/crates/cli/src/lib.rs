//! Command-line front end over the compact-coding toolkit.
//!
//! Seven subcommands cover the whole pipeline: `synth` and `groundtruth`
//! produce datasets, `train` fits a model, `encode` compresses a base set,
//! `search` and `eval` query it, and `bench` runs the standing multi-variant
//! comparison. Every artifact-writing command drops a JSON manifest next to
//! its output so a run can be audited and replayed.
//!
//! Exit codes are a stable contract: 0 on success, 1 when the work itself
//! fails, 2 when the invocation is wrong (including dataset paths that do
//! not resolve). Usage errors never write files.

pub mod args;
pub mod codes_io;
pub mod commands;
pub mod manifest;

use std::path::{Path, PathBuf};

pub use args::{Cli, Command};

/// Environment variable holding the directory dataset arguments resolve
/// against when they are relative and absent from the working directory.
pub const DATA_DIR_ENV: &str = "VQANN_DATA_DIR";

/// Failures split by exit code: `Usage` exits 2, `Runtime` exits 1.
#[derive(Debug)]
pub enum CliError {
    Usage(String),
    Runtime(String),
}

impl CliError {
    pub fn exit_code(&self) -> i32 {
        match self {
            CliError::Usage(_) => 2,
            CliError::Runtime(_) => 1,
        }
    }
}

impl std::fmt::Display for CliError {
    fn fmt(&self, f: &mut std::fmt::Formatter<'_>) -> std::fmt::Result {
        match self {
            CliError::Usage(msg) => write!(f, "usage error: {msg}"),
            CliError::Runtime(msg) => write!(f, "error: {msg}"),
        }
    }
}

impl std::error::Error for CliError {}

impl From<vqann_core::Error> for CliError {
    fn from(e: vqann_core::Error) -> Self {
        CliError::Runtime(e.to_string())
    }
}

impl From<std::io::Error> for CliError {
    fn from(e: std::io::Error) -> Self {
        CliError::Runtime(e.to_string())
    }
}

pub type CliResult<T> = std::result::Result<T, CliError>;

/// Resolves an input path: absolute paths pass through, relative ones try
/// the working directory first and `VQANN_DATA_DIR` second. A path that
/// resolves nowhere is a usage error, so nothing downstream runs.
pub fn resolve_input(path: &Path) -> CliResult<PathBuf> {
    if path.is_absolute() {
        if path.is_file() {
            return Ok(path.to_path_buf());
        }
        return Err(CliError::Usage(format!("no such file: {}", path.display())));
    }
    if path.is_file() {
        return Ok(path.to_path_buf());
    }
    if let Ok(root) = std::env::var(DATA_DIR_ENV) {
        let joined = Path::new(&root).join(path);
        if joined.is_file() {
            return Ok(joined);
        }
        return Err(CliError::Usage(format!(
            "no such file: {} (also tried {})",
            path.display(),
            joined.display()
        )));
    }
    Err(CliError::Usage(format!("no such file: {}", path.display())))
}

/// Resolves the code shape from `--m` with `--k`, `--bits`, or both.
/// `bits = m · ceil(log2 k)`, so `--bits` alone forces k to a power of two.
pub fn resolve_k(m: usize, k: Option<usize>, bits: Option<usize>) -> CliResult<usize> {
    if m == 0 {
        return Err(CliError::Usage("--m must be at least 1".into()));
    }
    let ceil_log2 = |k: usize| (usize::BITS - (k - 1).max(1).leading_zeros()) as usize;
    match (k, bits) {
        (Some(k), None) => {
            if k < 2 {
                return Err(CliError::Usage("--k must be at least 2".into()));
            }
            Ok(k)
        }
        (None, Some(bits)) => {
            if bits == 0 || bits % m != 0 {
                return Err(CliError::Usage(format!(
                    "--bits {bits} is not a positive multiple of --m {m}"
                )));
            }
            let per = bits / m;
            if per >= 32 {
                return Err(CliError::Usage(format!("--bits {bits} needs k >= 2^{per}")));
            }
            Ok(1usize << per)
        }
        (Some(k), Some(bits)) => {
            if k < 2 {
                return Err(CliError::Usage("--k must be at least 2".into()));
            }
            if m * ceil_log2(k) != bits {
                return Err(CliError::Usage(format!(
                    "--k {k} with --m {m} takes {} bits, not {bits}",
                    m * ceil_log2(k)
                )));
            }
            Ok(k)
        }
        (None, None) => Err(CliError::Usage("one of --k or --bits is required".into())),
    }
}

/// Dispatches one parsed invocation. The thread pool is sized first so every
/// command sees the same parallelism; reductions in the core are order-fixed,
/// so `--threads` changes wall time only, never output.
pub fn run(cli: &Cli) -> CliResult<()> {
    if let Some(threads) = cli.threads {
        if threads == 0 {
            return Err(CliError::Usage("--threads must be at least 1".into()));
        }
        rayon::ThreadPoolBuilder::new()
            .num_threads(threads)
            .build_global()
            .map_err(|e| CliError::Runtime(format!("thread pool: {e}")))?;
    }
    match &cli.command {
        Command::Synth(args) => commands::synth::run(args, cli),
        Command::Groundtruth(args) => commands::groundtruth::run(args, cli),
        Command::Train(args) => commands::train::run(args, cli),
        Command::Encode(args) => commands::encode::run(args, cli),
        Command::Search(args) => commands::search::run(args, cli),
        Command::Eval(args) => commands::eval::run(args, cli),
        Command::Bench(args) => commands::bench::run(args, cli),
    }
}
