//! End-to-end tests driving the installed binary.

use std::path::Path;
use std::process::{Command, Output};

use vqann_cli::codes_io::read_codes;
use vqann_core::benchmark::{evaluate_recall_grid, EVAL_R, EVAL_T};
use vqann_core::data::{brute_force_groundtruth, read_vecs, Dataset, Metric, VecsKind};
use vqann_core::model::{QuantizerModel, Variant};
use vqann_core::quant::{CodebookSet, Codes};
use vqann_core::trainers::{select_mu, TrainConfig};

fn bin() -> Command {
    Command::new(env!("CARGO_BIN_EXE_vqann"))
}

fn run_in(dir: &Path, args: &[&str]) -> Output {
    bin().current_dir(dir).args(args).output().expect("binary launches")
}

fn run_ok(dir: &Path, args: &[&str]) -> String {
    let out = run_in(dir, args);
    assert!(
        out.status.success(),
        "vqann {args:?} failed:\nstdout: {}\nstderr: {}",
        String::from_utf8_lossy(&out.stdout),
        String::from_utf8_lossy(&out.stderr)
    );
    String::from_utf8(out.stdout).expect("stdout is utf-8")
}

/// synth + groundtruth + train + encode in one temp dir; returns the dir.
fn pipeline_fixture(variant: &str, mu: &str) -> tempfile::TempDir {
    let dir = tempfile::tempdir().unwrap();
    let d = dir.path();
    run_ok(d, &["synth", "--n", "500", "--dim", "16", "--clusters", "12", "--spread", "0.1", "--seed", "3", "--out", "base.fvecs"]);
    run_ok(d, &["synth", "--n", "40", "--dim", "16", "--clusters", "12", "--spread", "0.1", "--seed", "4", "--out", "q.fvecs"]);
    run_ok(d, &["groundtruth", "base.fvecs", "--queries", "q.fvecs", "--depth", "100", "--out", "gt.ivecs"]);
    run_ok(
        d,
        &["train", "base.fvecs", "--variant", variant, "--m", "4", "--k", "16", "--mu", mu,
          "--iters", "4", "--kmeans-iters", "8", "--seed", "1", "--out", "model.vqm1"],
    );
    run_ok(d, &["encode", "base.fvecs", "--model", "model.vqm1", "--mu", mu, "--out", "base.vqc1"]);
    dir
}

#[test]
fn missing_dataset_path_exits_2_without_writing() {
    let dir = tempfile::tempdir().unwrap();
    let out = run_in(
        dir.path(),
        &["train", "nope.fvecs", "--variant", "pq", "--m", "4", "--k", "16", "--out", "model.vqm1"],
    );
    assert_eq!(out.status.code(), Some(2));
    assert!(!dir.path().join("model.vqm1").exists());
    assert!(!dir.path().join("model.vqm1.json").exists());
}

#[test]
fn usage_errors_exit_2() {
    let dir = tempfile::tempdir().unwrap();
    let d = dir.path();
    run_ok(d, &["synth", "--n", "50", "--dim", "8", "--clusters", "4", "--seed", "0", "--out", "x.fvecs"]);

    // Unknown flag value, rejected by the parser itself.
    let out = run_in(d, &["train", "x.fvecs", "--variant", "nope", "--m", "2", "--k", "4"]);
    assert_eq!(out.status.code(), Some(2));

    // k and bits that contradict each other.
    let out = run_in(d, &["train", "x.fvecs", "--variant", "pq", "--m", "4", "--k", "16", "--bits", "12"]);
    assert_eq!(out.status.code(), Some(2));

    // The μ sweep only exists for the δ-spread trainer.
    let out = run_in(d, &["train", "x.fvecs", "--variant", "pq", "--m", "2", "--k", "4", "--mu", "auto"]);
    assert_eq!(out.status.code(), Some(2));
}

#[test]
fn train_echoes_the_requested_shape_in_the_model_header() {
    let dir = tempfile::tempdir().unwrap();
    let d = dir.path();
    run_ok(d, &["synth", "--n", "200", "--dim", "8", "--clusters", "6", "--seed", "1", "--out", "x.fvecs"]);
    let stdout = run_ok(
        d,
        &["train", "x.fvecs", "--variant", "pq", "--m", "4", "--k", "16", "--kmeans-iters", "6", "--out", "m.vqm1"],
    );
    assert!(stdout.contains("objective"), "per-iteration log missing: {stdout}");

    let model = QuantizerModel::read(&d.join("m.vqm1")).unwrap();
    assert_eq!(model.variant, Variant::Pq);
    assert_eq!(model.m(), 4);
    assert_eq!(model.k(), 16);
    assert_eq!(model.dim(), 8);

    let manifest: serde_json::Value =
        serde_json::from_str(&std::fs::read_to_string(d.join("m.vqm1.json")).unwrap()).unwrap();
    assert_eq!(manifest["config"]["m"], 4);
    assert_eq!(manifest["config"]["k"], 16);
    assert_eq!(manifest["config"]["bits"], 16);
    assert!(manifest["outputs"].as_object().unwrap().len() == 1);
}

#[test]
fn bits_flag_stands_in_for_k() {
    let dir = tempfile::tempdir().unwrap();
    let d = dir.path();
    run_ok(d, &["synth", "--n", "200", "--dim", "8", "--clusters", "6", "--seed", "1", "--out", "x.fvecs"]);
    run_ok(d, &["train", "x.fvecs", "--variant", "pq", "--m", "2", "--bits", "8", "--kmeans-iters", "6", "--out", "m.vqm1"]);
    let model = QuantizerModel::read(&d.join("m.vqm1")).unwrap();
    assert_eq!(model.k(), 16);
    assert_eq!(model.bits_per_vector(), 8);
}

#[test]
fn auto_mu_matches_a_manual_sweep() {
    let dir = tempfile::tempdir().unwrap();
    let d = dir.path();
    run_ok(d, &["synth", "--n", "300", "--dim", "8", "--clusters", "8", "--spread", "0.1", "--seed", "5", "--out", "x.fvecs"]);
    run_ok(
        d,
        &["train", "x.fvecs", "--variant", "nocq", "--m", "2", "--k", "8", "--mu", "auto",
          "--iters", "3", "--kmeans-iters", "6", "--seed", "9", "--out", "m.vqm1"],
    );
    let manifest: serde_json::Value =
        serde_json::from_str(&std::fs::read_to_string(d.join("m.vqm1.json")).unwrap()).unwrap();
    let recorded = manifest["metrics"]["mu_selected"].as_f64().expect("auto run records mu");
    assert_eq!(manifest["config"]["mu"].as_f64().unwrap(), recorded);

    let data = read_vecs(&d.join("x.fvecs"), VecsKind::F32).unwrap();
    let config = TrainConfig { seed: 9, outer_iters: 3, kmeans_iters: 6, ..TrainConfig::default() };
    let manual = select_mu(&data, 2, 8, &config).unwrap();
    assert_eq!(recorded, manual, "CLI sweep diverged from the library call");
}

#[test]
fn eval_matches_direct_library_calls() {
    let dir = pipeline_fixture("nocq", "0.01");
    let d = dir.path();
    run_ok(d, &["eval", "q.fvecs", "--model", "model.vqm1", "--codes", "base.vqc1", "--gt", "gt.ivecs", "--out", "recall.csv"]);

    let recall_csv = std::fs::read_to_string(d.join("recall.csv")).unwrap();
    assert!(!recall_csv.contains('\r'), "CSV must use LF endings");
    let mut lines = recall_csv.lines();
    assert_eq!(lines.next(), Some("method,bits,T,R,recall"));
    let rows: Vec<Vec<String>> =
        lines.map(|l| l.split(',').map(str::to_string).collect()).collect();
    assert_eq!(rows.len(), EVAL_T.len() * EVAL_R.len());
    assert!(rows.iter().all(|r| r.len() == 5), "every row has the declared 5 columns");

    // Bypass the CLI: same files, direct library calls, exact equality.
    let model = QuantizerModel::read(&d.join("model.vqm1")).unwrap();
    let (codes, _) = read_codes(&d.join("base.vqc1")).unwrap();
    let queries = read_vecs(&d.join("q.fvecs"), VecsKind::F32).unwrap();
    let gt = vqann_core::data::GroundTruth::read_ivecs(&d.join("gt.ivecs")).unwrap();
    let (grid, map) = evaluate_recall_grid(&model, &codes, &queries, &gt).unwrap();
    for (row, &(t, r, v)) in rows.iter().zip(&grid) {
        assert_eq!(row[0], "nocq");
        assert_eq!(row[1], model.bits_per_vector().to_string());
        assert_eq!(row[2], t.to_string());
        assert_eq!(row[3], r.to_string());
        assert_eq!(row[4].parse::<f64>().unwrap(), v, "recall({t},{r}) differs");
    }

    let map_csv = std::fs::read_to_string(d.join("recall-map.csv")).unwrap();
    let map_row = map_csv.lines().nth(1).unwrap();
    assert_eq!(map_row.split(',').nth(2).unwrap().parse::<f64>().unwrap(), map);
}

#[test]
fn lossless_model_attains_every_recall_ceiling() {
    let dir = tempfile::tempdir().unwrap();
    let d = dir.path();

    // One dictionary whose elements are the base vectors themselves: the
    // scan computes exact distances, so retrieval is perfect and each grid
    // cell hits its ceiling min(r, t)/t.
    let n = 120;
    let data = vqann_core::data::synth_mixture(n, 4, 10, 0.3, 11).unwrap();
    let tensor = ndarray::Array3::from_shape_fn((1, n, 4), |(_, i, j)| data.row(i)[j]);
    let model = QuantizerModel::new(
        Variant::Cq,
        CodebookSet::new(tensor).unwrap(),
        0.0,
        None,
        Vec::new(),
    )
    .unwrap();
    model.write(&d.join("model.vqm1")).unwrap();
    let codes = Codes::from_rows(&(0..n as u32).map(|i| vec![i]).collect::<Vec<_>>()).unwrap();
    vqann_cli::codes_io::write_codes(&d.join("base.vqc1"), &codes, n).unwrap();
    vqann_core::data::write_vecs(&data, &d.join("q.fvecs"), VecsKind::F32).unwrap();
    let gt = brute_force_groundtruth(&data, &data, 100, Metric::SquaredL2).unwrap();
    gt.write_ivecs(&d.join("gt.ivecs")).unwrap();

    let stdout = run_ok(d, &["eval", "q.fvecs", "--model", "model.vqm1", "--codes", "base.vqc1", "--gt", "gt.ivecs"]);
    for line in stdout.lines().skip(1) {
        if line.is_empty() || line.starts_with("method") {
            continue;
        }
        let fields: Vec<&str> = line.split(',').collect();
        if fields.len() == 5 {
            let t: f64 = fields[2].parse().unwrap();
            let r: f64 = fields[3].parse().unwrap();
            let recall: f64 = fields[4].parse().unwrap();
            let ceiling = r.min(t) / t;
            assert!((recall - ceiling).abs() < 1e-12, "recall({t},{r}) = {recall}, ceiling {ceiling}");
        } else {
            // The MAP block: perfect ranking scores exactly 1.
            assert_eq!(fields.len(), 3);
            assert_eq!(fields[2].parse::<f64>().unwrap(), 1.0);
        }
    }
}

#[test]
fn outputs_are_bit_identical_across_reruns_and_thread_counts() {
    let dir = pipeline_fixture("cq", "0");
    let d = dir.path();
    run_ok(d, &["--threads", "1", "eval", "q.fvecs", "--model", "model.vqm1", "--codes", "base.vqc1", "--gt", "gt.ivecs", "--out", "a.csv"]);
    run_ok(d, &["--threads", "1", "eval", "q.fvecs", "--model", "model.vqm1", "--codes", "base.vqc1", "--gt", "gt.ivecs", "--out", "b.csv"]);
    run_ok(d, &["--threads", "4", "eval", "q.fvecs", "--model", "model.vqm1", "--codes", "base.vqc1", "--gt", "gt.ivecs", "--out", "c.csv"]);
    let a = std::fs::read(d.join("a.csv")).unwrap();
    assert_eq!(a, std::fs::read(d.join("b.csv")).unwrap(), "rerun changed the output");
    assert_eq!(a, std::fs::read(d.join("c.csv")).unwrap(), "thread count changed the output");

    // Retraining from the same seed reproduces the model file byte for byte.
    run_ok(
        d,
        &["train", "base.fvecs", "--variant", "cq", "--m", "4", "--k", "16", "--mu", "0",
          "--iters", "4", "--kmeans-iters", "8", "--seed", "1", "--out", "model2.vqm1"],
    );
    assert_eq!(
        std::fs::read(d.join("model.vqm1")).unwrap(),
        std::fs::read(d.join("model2.vqm1")).unwrap()
    );
}

#[test]
fn data_dir_env_resolves_relative_paths() {
    let data_dir = tempfile::tempdir().unwrap();
    let work_dir = tempfile::tempdir().unwrap();
    run_ok(data_dir.path(), &["synth", "--n", "100", "--dim", "8", "--clusters", "5", "--seed", "2", "--out", "base.fvecs"]);

    let out = bin()
        .current_dir(work_dir.path())
        .env("VQANN_DATA_DIR", data_dir.path())
        .args(["train", "base.fvecs", "--variant", "pq", "--m", "2", "--k", "4", "--kmeans-iters", "5", "--out", "m.vqm1"])
        .output()
        .unwrap();
    assert!(out.status.success(), "{}", String::from_utf8_lossy(&out.stderr));
    assert!(work_dir.path().join("m.vqm1").exists(), "model lands in the working dir");
}

#[test]
fn search_emits_one_row_per_rank() {
    let dir = pipeline_fixture("pq", "0");
    let d = dir.path();
    let stdout = run_ok(d, &["search", "q.fvecs", "--model", "model.vqm1", "--codes", "base.vqc1", "--r", "5"]);
    let lines: Vec<&str> = stdout.lines().collect();
    assert_eq!(lines[0], "query,rank,id,score");
    assert_eq!(lines.len(), 1 + 40 * 5);
    // Scores ascend within each query block.
    let mut prev = (0usize, f64::NEG_INFINITY);
    for line in &lines[1..] {
        let f: Vec<&str> = line.split(',').collect();
        let q: usize = f[0].parse().unwrap();
        let score: f64 = f[3].parse().unwrap();
        if q == prev.0 {
            assert!(score >= prev.1, "scores out of order: {line}");
        }
        prev = (q, score);
    }

    let compressed = run_ok(
        d,
        &["search", "q.fvecs", "--model", "model.vqm1", "--codes", "base.vqc1", "--r", "5", "--compressed-query", "--out", "cq.csv"],
    );
    assert!(compressed.is_empty(), "--out silences stdout");
    assert!(d.join("cq.csv").exists());
    assert!(d.join("cq.csv.json").exists(), "manifest accompanies the artifact");
}

#[test]
fn mismatched_dimensions_fail_at_runtime() {
    let dir = pipeline_fixture("pq", "0");
    let d = dir.path();
    run_ok(d, &["synth", "--n", "50", "--dim", "8", "--clusters", "4", "--seed", "6", "--out", "narrow.fvecs"]);
    let out = run_in(d, &["encode", "narrow.fvecs", "--model", "model.vqm1", "--out", "bad.vqc1"]);
    assert_eq!(out.status.code(), Some(1));
    assert!(!d.join("bad.vqc1").exists());
}

#[test]
fn encoding_matches_the_trainers_own_codes() {
    // For product-structured models the per-point encode is globally optimal,
    // so re-encoding the training set may only tie or improve on the
    // trainer's final assignment (dictionaries moved after its last encode).
    // The additive encoder is local search from a fresh greedy init and may
    // land slightly above the trainer's warm-started codes, so it gets slack.
    let data = vqann_core::data::synth_mixture(300, 8, 8, 0.15, 21).unwrap();
    let config = TrainConfig { outer_iters: 4, kmeans_iters: 8, ..TrainConfig::default() };
    for (variant, slack, out) in [
        ("pq", 1e-9, vqann_core::trainers::pq_model(&data, 2, 8, &config).unwrap()),
        ("ckm", 1e-9, vqann_core::trainers::ckm_model(&data, 2, 8, &config).unwrap()),
        ("cq", 0.05, vqann_core::trainers::train_cq(&data, 2, 8, &config).unwrap()),
    ] {
        let trained = vqann_core::quant::quantization_error(
            &out.model.codebooks,
            &data,
            &out.codes,
        )
        .unwrap();
        let re = vqann_cli::commands::encode::encode_with_model(&out.model, &data, 0.0, 3).unwrap();
        let re_err =
            vqann_core::quant::quantization_error(&out.model.codebooks, &data, &re).unwrap();
        assert!(
            re_err <= trained * (1.0 + slack),
            "{variant}: re-encode {re_err} worse than training {trained}"
        );
    }
}

#[test]
fn bench_smoke_preset_runs_and_reproduces() {
    let dir = tempfile::tempdir().unwrap();
    let d = dir.path();
    let stdout = run_ok(d, &["bench", "--preset", "smoke", "--seed", "0", "--out", "runa"]);
    for variant in ["pq", "ckm", "cq", "ocq", "nocq"] {
        assert!(stdout.contains(variant), "summary lacks {variant}:\n{stdout}");
    }
    assert!(stdout.contains("quantization error"));
    assert!(stdout.contains("recall@10"));

    run_ok(d, &["bench", "--preset", "smoke", "--seed", "0", "--out", "runb"]);
    assert_eq!(
        std::fs::read(d.join("runa/recall.csv")).unwrap(),
        std::fs::read(d.join("runb/recall.csv")).unwrap(),
        "seed-pinned bench is not reproducible"
    );
    let manifest: serde_json::Value =
        serde_json::from_str(&std::fs::read_to_string(d.join("runa/manifest.json")).unwrap())
            .unwrap();
    assert_eq!(manifest["config"]["preset"], "smoke");
    assert!(manifest["metrics"]["mean_recall_at_10"]["nocq"].is_number());

    let bad = run_in(d, &["bench", "--preset", "galactic"]);
    assert_eq!(bad.status.code(), Some(2));
}

#[test]
fn dataset_holds_what_synth_wrote() {
    let dir = tempfile::tempdir().unwrap();
    let d = dir.path();
    run_ok(d, &["synth", "--n", "64", "--dim", "12", "--clusters", "4", "--seed", "8", "--out", "x.fvecs"]);
    let ds: Dataset = read_vecs(&d.join("x.fvecs"), VecsKind::F32).unwrap();
    assert_eq!(ds.n(), 64);
    assert_eq!(ds.dim(), 12);
    let manifest: serde_json::Value =
        serde_json::from_str(&std::fs::read_to_string(d.join("x.fvecs.json")).unwrap()).unwrap();
    assert_eq!(manifest["config"]["clusters"], 4);
}
