//! Reproducibility record written next to every artifact.
//!
//! The manifest captures the exact invocation, the resolved configuration,
//! content hashes of every input and output file, and the headline metrics.
//! Re-running the recorded command against inputs with the same hashes
//! reproduces the outputs bit for bit (any thread count; reductions in the
//! core are order-fixed).

use std::collections::BTreeMap;
use std::fs::File;
use std::io::{BufReader, Read, Write};
use std::path::{Path, PathBuf};

use crate::{CliError, CliResult};

#[derive(Debug, serde::Serialize)]
pub struct RunManifest {
    /// argv as invoked.
    pub command: Vec<String>,
    pub seed: u64,
    /// Resolved worker count for this run.
    pub threads: usize,
    /// Subcommand-specific configuration snapshot.
    pub config: serde_json::Value,
    /// Input path → fnv1a-64 content hash.
    pub inputs: BTreeMap<String, String>,
    /// Output path → fnv1a-64 content hash, filled after the artifacts exist.
    pub outputs: BTreeMap<String, String>,
    pub metrics: serde_json::Value,
}

impl RunManifest {
    pub fn new(seed: u64, config: serde_json::Value) -> Self {
        RunManifest {
            command: std::env::args().collect(),
            seed,
            threads: rayon::current_num_threads(),
            config,
            inputs: BTreeMap::new(),
            outputs: BTreeMap::new(),
            metrics: serde_json::Value::Null,
        }
    }

    pub fn add_input(&mut self, path: &Path) -> CliResult<()> {
        self.inputs.insert(path.display().to_string(), file_hash(path)?);
        Ok(())
    }

    pub fn add_output(&mut self, path: &Path) -> CliResult<()> {
        self.outputs.insert(path.display().to_string(), file_hash(path)?);
        Ok(())
    }

    /// Writes the manifest as `<artifact>.json` and returns that path.
    pub fn write_next_to(&self, artifact: &Path) -> CliResult<PathBuf> {
        let mut name = artifact.file_name().unwrap_or_default().to_os_string();
        name.push(".json");
        let path = artifact.with_file_name(name);
        self.write_to(&path)?;
        Ok(path)
    }

    pub fn write_to(&self, path: &Path) -> CliResult<()> {
        let json = serde_json::to_string_pretty(self)
            .map_err(|e| CliError::Runtime(format!("manifest: {e}")))?;
        let mut file = File::create(path)?;
        file.write_all(json.as_bytes())?;
        file.write_all(b"\n")?;
        Ok(())
    }
}

/// FNV-1a over the file bytes, hex encoded. Not cryptographic; it only has
/// to notice that an input changed between runs.
pub fn file_hash(path: &Path) -> CliResult<String> {
    let file = File::open(path)
        .map_err(|e| CliError::Runtime(format!("hashing {}: {e}", path.display())))?;
    let mut reader = BufReader::new(file);
    let mut hash: u64 = 0xcbf2_9ce4_8422_2325;
    let mut buf = [0u8; 8192];
    loop {
        let got = reader.read(&mut buf)?;
        if got == 0 {
            break;
        }
        for &b in &buf[..got] {
            hash = (hash ^ u64::from(b)).wrapping_mul(0x100_0000_01b3);
        }
    }
    Ok(format!("{hash:016x}"))
}
