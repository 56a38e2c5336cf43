//! `synth`: draw a cluster mixture and write it as a vector file.

use vqann_core::data::{synth_mixture, write_vecs};

use super::vecs_kind;
use crate::args::{Cli, SynthArgs};
use crate::manifest::RunManifest;
use crate::CliResult;

pub fn run(args: &SynthArgs, _cli: &Cli) -> CliResult<()> {
    let kind = vecs_kind(&args.out)?;
    let data = synth_mixture(args.n, args.dim, args.clusters, args.spread, args.seed)?;
    write_vecs(&data, &args.out, kind)?;

    let mut manifest = RunManifest::new(
        args.seed,
        serde_json::json!({
            "n": args.n,
            "dim": args.dim,
            "clusters": args.clusters,
            "spread": args.spread,
        }),
    );
    manifest.add_output(&args.out)?;
    manifest.write_next_to(&args.out)?;
    println!("wrote {} vectors ({} dims) to {}", args.n, args.dim, args.out.display());
    Ok(())
}
