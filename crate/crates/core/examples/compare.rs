//! Empirical versus hierarchical Bayes on shared observations.
//!
//! cargo run --release --example compare -- [n] [replicates]

use credball::credible::BallMethod;
use credball::harness::{compare_eb_hb, ExperimentConfig, TruthSpec};
use credball::model::TruthFamily;

fn main() -> credball::Result<()> {
    let mut args = std::env::args().skip(1);
    let n: u64 = args.next().map_or(10_000, |s| s.parse().expect("n"));
    let reps: usize = args.next().map_or(40, |s| s.parse().expect("replicates"));
    let truth = TruthSpec {
        family: TruthFamily::SelfSimilar,
        beta: 1.0,
        scale: 1.0,
        seed: 0,
    };
    let mut config = ExperimentConfig::new(BallMethod::EbAlpha, truth, vec![n]);
    config.replicates = reps;
    config.master_seed = 3;

    let report = compare_eb_hb(&config)?;
    for r in &report.rows {
        println!(
            "n={} coverage eb {:.3} hb {:.3}  difference {:+.3} (paired se {:.3})",
            r.n, r.coverage_eb, r.coverage_hb, r.difference, r.paired_se
        );
        println!(
            "median |center_eb - center_hb| = {:.3e}, {:.3} of the mean radius",
            r.median_center_distance, r.proximity
        );
    }
    let agree = report
        .pairs
        .iter()
        .filter(|p| p.covered_eb == p.covered_hb)
        .count();
    println!(
        "replicates with the same outcome: {agree}/{}",
        report.pairs.len()
    );
    Ok(())
}
