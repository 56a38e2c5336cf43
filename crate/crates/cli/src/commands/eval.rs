//! `eval`: the retrieval-quality grid as CSV.
//!
//! Two tables with fixed schemas: `method,bits,T,R,recall` over the full
//! (T, R) grid, and `method,bits,MAP`. Values use the shortest decimal form
//! that round-trips, dot separator, LF endings, so downstream parsers can
//! compare them to library outputs exactly.

use std::path::{Path, PathBuf};

use vqann_core::benchmark::evaluate_recall_grid;
use vqann_core::data::GroundTruth;
use vqann_core::model::QuantizerModel;

use super::load_dataset;
use crate::args::{Cli, EvalArgs};
use crate::manifest::RunManifest;
use crate::{resolve_input, CliError, CliResult};

/// The MAP table's path: `<stem>-map.<ext>` next to the recall table.
pub fn map_sibling(out: &Path) -> PathBuf {
    let stem = out.file_stem().unwrap_or_default().to_string_lossy();
    let ext = out.extension().map(|e| e.to_string_lossy().into_owned());
    match ext {
        Some(ext) => out.with_file_name(format!("{stem}-map.{ext}")),
        None => out.with_file_name(format!("{stem}-map.csv")),
    }
}

pub fn run(args: &EvalArgs, _cli: &Cli) -> CliResult<()> {
    let model_path = resolve_input(&args.model)?;
    let model = QuantizerModel::read(&model_path)?;
    let codes_path = resolve_input(&args.codes)?;
    let (codes, k) = crate::codes_io::read_codes(&codes_path)?;
    if k != model.k() {
        return Err(CliError::Runtime(format!(
            "codes were packed against k={k}, model has k={}",
            model.k()
        )));
    }
    let (queries_path, queries) = load_dataset(&args.queries)?;
    let gt_path = resolve_input(&args.gt)?;
    let gt = GroundTruth::read_ivecs(&gt_path)?;
    if gt.n_queries() != queries.n() {
        return Err(CliError::Runtime(format!(
            "{} ground-truth rows for {} queries",
            gt.n_queries(),
            queries.n()
        )));
    }

    let (grid, map) = evaluate_recall_grid(&model, &codes, &queries, &gt)?;
    let method = args.method.clone().unwrap_or_else(|| model.variant.to_string());
    let bits = model.bits_per_vector();

    let mut recall_csv = String::from("method,bits,T,R,recall\n");
    for &(t, r, v) in &grid {
        recall_csv.push_str(&format!("{method},{bits},{t},{r},{v}\n"));
    }
    let map_csv = format!("method,bits,MAP\n{method},{bits},{map}\n");

    match &args.out {
        Some(out) => {
            std::fs::write(out, &recall_csv)?;
            let map_path = map_sibling(out);
            std::fs::write(&map_path, &map_csv)?;

            let mut manifest = RunManifest::new(
                0,
                serde_json::json!({ "method": method, "bits": bits }),
            );
            manifest.add_input(&queries_path)?;
            manifest.add_input(&model_path)?;
            manifest.add_input(&codes_path)?;
            manifest.add_input(&gt_path)?;
            manifest.add_output(out)?;
            manifest.add_output(&map_path)?;
            manifest.metrics = serde_json::json!({
                "recall": grid.iter().map(|&(t, r, v)| serde_json::json!([t, r, v])).collect::<Vec<_>>(),
                "map": map,
            });
            manifest.write_next_to(out)?;
        }
        None => {
            print!("{recall_csv}");
            println!();
            print!("{map_csv}");
        }
    }
    Ok(())
}
