//! A small coverage experiment, written to a results directory with a manifest.
//!
//! cargo run --release --example coverage -- [method] [out_dir]

use std::path::PathBuf;

use credball::credible::BallMethod;
use credball::harness::{
    coverage_files, run_coverage, unix_now, write_results, ExperimentConfig, TruthSpec,
};
use credball::model::TruthFamily;

fn main() -> credball::Result<()> {
    let mut args = std::env::args().skip(1);
    let method: BallMethod = args.next().map_or(Ok(BallMethod::EbAlpha), |s| s.parse())?;
    let out = PathBuf::from(
        args.next()
            .unwrap_or_else(|| "target/coverage-example".into()),
    );

    let truth = TruthSpec {
        family: TruthFamily::SelfSimilar,
        beta: 1.0,
        scale: 1.0,
        seed: 0,
    };
    let mut config = ExperimentConfig::new(method, truth, vec![100, 1000, 10_000]);
    config.replicates = 50;
    config.master_seed = 7;

    let started = unix_now();
    let report = run_coverage(&config)?;
    for r in &report.rows {
        println!(
            "n={:>6} coverage {:.3} ± {:.3}  mean radius {:.4e}  boundary {:.2}",
            r.n, r.coverage, r.se, r.mean_radius, r.boundary_fraction
        );
    }
    let manifest = write_results(
        &out,
        "coverage",
        &config,
        started,
        &coverage_files(&report)?,
    )?;
    println!("{}", manifest.display());
    Ok(())
}
