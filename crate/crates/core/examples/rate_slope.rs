//! Size of the adaptive balls: slope of log radius against log n.
//!
//! cargo run --release --example rate_slope

use credball::credible::BallMethod;
use credball::harness::{rate_slope, ExperimentConfig, TruthSpec};
use credball::model::TruthFamily;

fn run(method: BallMethod, beta: f64, p: f64) -> credball::Result<()> {
    let truth = TruthSpec {
        family: TruthFamily::SelfSimilar,
        beta,
        scale: 1.0,
        seed: 0,
    };
    let mut config = ExperimentConfig::new(method, truth, vec![1000, 10_000, 100_000]);
    config.replicates = 10;
    config.p = p;
    config.master_seed = 5;
    let (report, check) = rate_slope(&config, beta)?;
    let radii: Vec<String> = report
        .rows
        .iter()
        .map(|r| format!("{:.3e}", r.mean_radius))
        .collect();
    println!("{method} beta={beta} p={p}: radii {radii:?}");
    println!("  {}", check.message());
    Ok(())
}

fn main() -> credball::Result<()> {
    run(BallMethod::EbAlpha, 1.0, 0.0)?;
    run(BallMethod::EbAlpha, 1.0, 1.0)?;
    // eb_tau with α = 1 on a smoother truth: the sets are too large
    run(BallMethod::EbTau, 2.0, 0.0)
}
