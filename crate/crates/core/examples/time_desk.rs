use std::time::Instant;
use vqann_core::benchmark::{desk_preset, run_benchmark};
use vqann_core::model::Variant;

fn main() {
    let args: Vec<String> = std::env::args().collect();
    let clusters: usize = args.get(1).map(|s| s.parse().unwrap()).unwrap_or(50);
    let spread: f64 = args.get(2).map(|s| s.parse().unwrap()).unwrap_or(0.12);
    let mut config = desk_preset();
    config.clusters = clusters;
    config.spread = spread;
    config.mu_sample = config.n;
    if let Some(mu) = args.get(3) {
        config.validate_mu = false;
        config.train.mu = mu.parse().unwrap();
    }
    let t = Instant::now();
    let report = run_benchmark(&config).unwrap();
    println!("clusters={clusters} spread={spread} mu={}: {:.1}s", report.mu, t.elapsed().as_secs_f64());
    for v in [Variant::Pq, Variant::Ckm, Variant::Cq, Variant::Ocq, Variant::Nocq, Variant::Snocq] {
        let per_seed: Vec<String> = report.runs_for(v).map(|r| format!("{:.3}", r.recall_at(1, 10).unwrap())).collect();
        let mad: Vec<String> = report.runs_for(v).filter_map(|r| r.delta_mad).map(|m| format!("{:.3}", m)).collect();
        println!(
            "{v:<6} err {:>12.5e}  r@10(t1) {:.4} [{}]  mad [{}]",
            report.mean_error(v),
            report.mean_recall(v, 1, 10),
            per_seed.join(" "),
            mad.join(" ")
        );
    }
}
