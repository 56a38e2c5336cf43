//! `train`: fit one quantizer variant and write the model file.

use std::path::PathBuf;
use std::time::Instant;

use vqann_core::model::{QuantizerModel, TrainRecord, Variant};
use vqann_core::sparse::{select_lambda, train_snocq, SparseConfig};
use vqann_core::trainers::{
    ckm_model, pq_model, select_mu, train_cq, train_nocq, train_ocq, TrainConfig,
};

use super::load_dataset;
use crate::args::{Cli, TrainArgs, Weight};
use crate::manifest::RunManifest;
use crate::{resolve_k, CliError, CliResult};

pub fn run(args: &TrainArgs, _cli: &Cli) -> CliResult<()> {
    let k = resolve_k(args.m, args.k, args.bits)?;
    if args.s_budget.is_some() && args.variant != Variant::Snocq {
        return Err(CliError::Usage("--s-budget only applies to --variant snocq".into()));
    }
    if args.lambda == Weight::Auto && args.variant != Variant::Snocq {
        return Err(CliError::Usage("--lambda auto only applies to --variant snocq".into()));
    }
    let (data_path, data) = load_dataset(&args.data)?;

    let mut config = TrainConfig {
        seed: args.seed,
        outer_iters: args.iters,
        kmeans_iters: args.kmeans_iters,
        ..TrainConfig::default()
    };

    // The δ-spread sweep targets the nocq objective; other variants take μ
    // as given (pq/ckm/cq ignore it entirely).
    let mut mu_selected = None;
    config.mu = match (args.variant, args.mu) {
        (Variant::Nocq, Weight::Auto) => {
            let chosen = select_mu(&data, args.m, k, &config)?;
            mu_selected = Some(chosen);
            chosen
        }
        (_, Weight::Auto) => {
            return Err(CliError::Usage("--mu auto is only supported for --variant nocq".into()))
        }
        (_, Weight::Fixed(v)) => v,
    };

    let out_path =
        args.out.clone().unwrap_or_else(|| PathBuf::from(format!("{}.vqm1", args.variant)));

    let started = Instant::now();
    let mut lambda_used = None;
    let mut lambda_selected = None;
    let mut s_budget_used = None;
    let model: QuantizerModel = match args.variant {
        Variant::Pq => pq_model(&data, args.m, k, &config)?.model,
        Variant::Ckm => ckm_model(&data, args.m, k, &config)?.model,
        Variant::Cq => train_cq(&data, args.m, k, &config)?.model,
        Variant::Ocq => train_ocq(&data, args.m, k, &config)?.model,
        Variant::Nocq => train_nocq(&data, args.m, k, &config)?.model,
        Variant::Snocq => {
            let s_budget =
                args.s_budget.unwrap_or_else(|| SparseConfig::default_budget(k, data.dim()));
            s_budget_used = Some(s_budget);
            let base = SparseConfig { s_budget, lambda: 0.0, base: config.clone() };
            let lambda = match args.lambda {
                Weight::Auto => {
                    let chosen = select_lambda(&data, args.m, k, &base)?;
                    lambda_selected = Some(chosen);
                    chosen
                }
                Weight::Fixed(v) => v,
            };
            lambda_used = Some(lambda);
            let sparse = SparseConfig { lambda, ..base };
            let out = train_snocq(&data, args.m, k, &sparse)?;
            print_log("stage1 iter", &out.stage1_log);
            out.model
        }
    };
    let train_secs = started.elapsed().as_secs_f64();

    print_log("iter", &model.train_log);
    model.write(&out_path)?;

    let last = model.train_log.last().expect("training always logs");
    let mut manifest = RunManifest::new(
        args.seed,
        serde_json::json!({
            "variant": model.variant,
            "m": args.m,
            "k": k,
            "bits": model.bits_per_vector(),
            "mu": config.mu,
            "lambda": lambda_used,
            "s_budget": s_budget_used,
            "iters": args.iters,
            "kmeans_iters": args.kmeans_iters,
        }),
    );
    manifest.add_input(&data_path)?;
    manifest.add_output(&out_path)?;
    manifest.metrics = serde_json::json!({
        "final_objective": last.objective,
        "final_quant_error": last.quant_error,
        "epsilon": model.epsilon,
        "nnz": model.codebooks.nnz(),
        "mu_selected": mu_selected,
        "lambda_selected": lambda_selected,
        "train_secs": train_secs,
    });
    manifest.write_next_to(&out_path)?;

    println!(
        "wrote {} model (m={} k={} bits={}) to {}",
        model.variant,
        args.m,
        k,
        model.bits_per_vector(),
        out_path.display()
    );
    Ok(())
}

fn print_log(prefix: &str, log: &[TrainRecord]) {
    for (i, rec) in log.iter().enumerate() {
        println!(
            "{prefix} {i} objective {} error {} residual {}",
            rec.objective, rec.quant_error, rec.constraint_residual
        );
    }
}
