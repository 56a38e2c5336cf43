//! `bench`: the standing multi-variant comparison on synthetic data.

use vqann_core::benchmark::{desk_preset, run_benchmark, smoke_preset, BenchReport, EVAL_R, EVAL_T};

use crate::args::{BenchArgs, Cli};
use crate::manifest::RunManifest;
use crate::{CliError, CliResult};

/// Mean-over-seeds recall table with the eval command's schema.
pub fn recall_csv(report: &BenchReport) -> String {
    let mut csv = String::from("method,bits,T,R,recall\n");
    for variant in report.variants() {
        for &t in &EVAL_T {
            for &r in &EVAL_R {
                csv.push_str(&format!(
                    "{variant},{},{t},{r},{}\n",
                    report.bits(),
                    report.mean_recall(variant, t, r)
                ));
            }
        }
    }
    csv
}

pub fn map_csv(report: &BenchReport) -> String {
    let mut csv = String::from("method,bits,MAP\n");
    for variant in report.variants() {
        let (mut sum, mut count) = (0.0, 0usize);
        for run in report.runs_for(variant) {
            sum += run.map;
            count += 1;
        }
        csv.push_str(&format!("{variant},{},{}\n", report.bits(), sum / count as f64));
    }
    csv
}

pub fn run(args: &BenchArgs, _cli: &Cli) -> CliResult<()> {
    let mut config = match args.preset.as_str() {
        "desk" => desk_preset(),
        "smoke" => smoke_preset(),
        other => return Err(CliError::Usage(format!("unknown preset {other:?} (desk, smoke)"))),
    };
    if let Some(seed) = args.seed {
        config.seeds = vec![seed];
    }

    let report = run_benchmark(&config)?;
    let summary = report.render();
    print!("{summary}");
    println!("\ntotal {:.1}s", report.total_secs);

    if let Some(dir) = &args.out {
        std::fs::create_dir_all(dir)?;
        let summary_path = dir.join("summary.txt");
        let recall_path = dir.join("recall.csv");
        let map_path = dir.join("map.csv");
        std::fs::write(&summary_path, &summary)?;
        std::fs::write(&recall_path, recall_csv(&report))?;
        std::fs::write(&map_path, map_csv(&report))?;

        let mut manifest = RunManifest::new(
            config.seeds[0],
            serde_json::json!({
                "preset": args.preset,
                "n": config.n,
                "dim": config.dim,
                "n_queries": config.n_queries,
                "clusters": config.clusters,
                "spread": config.spread,
                "m": config.m,
                "k": config.k,
                "seeds": config.seeds,
                "mu_ocq": config.mu_ocq,
                "include_sparse": config.include_sparse,
                "validate_mu": config.validate_mu,
                "mu_sample": config.mu_sample,
            }),
        );
        manifest.add_output(&summary_path)?;
        manifest.add_output(&recall_path)?;
        manifest.add_output(&map_path)?;
        manifest.metrics = serde_json::json!({
            "mu": report.mu,
            "total_secs": report.total_secs,
            "mean_error": report
                .variants()
                .iter()
                .map(|&v| (v.to_string(), report.mean_error(v)))
                .collect::<std::collections::BTreeMap<_, _>>(),
            "mean_recall_at_10": report
                .variants()
                .iter()
                .map(|&v| (v.to_string(), report.mean_recall(v, 1, 10)))
                .collect::<std::collections::BTreeMap<_, _>>(),
        });
        manifest.write_to(&dir.join("manifest.json"))?;
    }
    Ok(())
}
