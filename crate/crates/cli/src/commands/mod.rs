//! One module per subcommand plus the shared file plumbing.

pub mod bench;
pub mod encode;
pub mod eval;
pub mod groundtruth;
pub mod search;
pub mod synth;
pub mod train;

use std::path::Path;

use vqann_core::data::{read_vecs, Dataset, VecsKind};

use crate::{resolve_input, CliError, CliResult};

/// Maps a vector-file extension to its element kind.
fn vecs_kind(path: &Path) -> CliResult<VecsKind> {
    match path.extension().and_then(|e| e.to_str()) {
        Some("fvecs") => Ok(VecsKind::F32),
        Some("bvecs") => Ok(VecsKind::U8),
        _ => Err(CliError::Usage(format!(
            "{} must end in .fvecs or .bvecs",
            path.display()
        ))),
    }
}

/// Resolves and loads one vector file argument.
fn load_dataset(path: &Path) -> CliResult<(std::path::PathBuf, Dataset)> {
    let resolved = resolve_input(path)?;
    let kind = vecs_kind(&resolved)?;
    let data = read_vecs(&resolved, kind)?;
    Ok((resolved, data))
}

/// Writes a CSV body to the given path, or stdout when absent.
fn emit(out: Option<&Path>, body: &str) -> CliResult<()> {
    match out {
        Some(path) => {
            std::fs::write(path, body)?;
            Ok(())
        }
        None => {
            print!("{body}");
            Ok(())
        }
    }
}
