//! `groundtruth`: exact nearest neighbors by brute force.

use vqann_core::data::brute_force_groundtruth;

use super::load_dataset;
use crate::args::{Cli, GroundtruthArgs};
use crate::manifest::RunManifest;
use crate::{CliError, CliResult};

pub fn run(args: &GroundtruthArgs, _cli: &Cli) -> CliResult<()> {
    let (base_path, base) = load_dataset(&args.base)?;
    let (queries_path, queries) = load_dataset(&args.queries)?;
    if args.depth == 0 {
        return Err(CliError::Usage("--depth must be at least 1".into()));
    }
    let gt = brute_force_groundtruth(&base, &queries, args.depth, args.metric)?;
    gt.write_ivecs(&args.out)?;

    let mut manifest = RunManifest::new(
        0,
        serde_json::json!({
            "depth": args.depth,
            "metric": args.metric,
        }),
    );
    manifest.add_input(&base_path)?;
    manifest.add_input(&queries_path)?;
    manifest.add_output(&args.out)?;
    manifest.write_next_to(&args.out)?;
    println!(
        "wrote {} neighbor rows ({} deep) to {}",
        gt.n_queries(),
        gt.depth(),
        args.out.display()
    );
    Ok(())
}
