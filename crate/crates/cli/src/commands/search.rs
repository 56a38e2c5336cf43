//! `search`: top-r neighbors per query as CSV rows.

use rayon::prelude::*;
use vqann_core::model::QuantizerModel;
use vqann_core::search::{adc_scan, build_distance_table, compressed_query_search, SearchResult};

use super::{emit, load_dataset};
use crate::args::{Cli, SearchArgs};
use crate::manifest::RunManifest;
use crate::{resolve_input, CliError, CliResult};

pub fn run(args: &SearchArgs, _cli: &Cli) -> CliResult<()> {
    if args.r == 0 {
        return Err(CliError::Usage("--r must be at least 1".into()));
    }
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

    let results: Vec<SearchResult> = (0..queries.n())
        .into_par_iter()
        .map(|i| {
            if args.compressed_query {
                compressed_query_search(&model, queries.row(i), &codes, args.r)
            } else {
                let table = build_distance_table(&model, queries.row(i))?;
                adc_scan(&model, &table, &codes, args.r)
            }
        })
        .collect::<vqann_core::Result<_>>()?;

    let mut csv = String::from("query,rank,id,score\n");
    for (qi, res) in results.iter().enumerate() {
        for (rank, (id, score)) in res.ids.iter().zip(&res.scores).enumerate() {
            csv.push_str(&format!("{qi},{rank},{id},{score}\n"));
        }
    }
    emit(args.out.as_deref(), &csv)?;

    if let Some(out) = &args.out {
        let mut manifest = RunManifest::new(
            0,
            serde_json::json!({
                "r": args.r,
                "compressed_query": args.compressed_query,
            }),
        );
        manifest.add_input(&queries_path)?;
        manifest.add_input(&model_path)?;
        manifest.add_input(&codes_path)?;
        manifest.add_output(out)?;
        manifest.metrics = serde_json::json!({ "queries": queries.n() });
        manifest.write_next_to(out)?;
    }
    Ok(())
}
