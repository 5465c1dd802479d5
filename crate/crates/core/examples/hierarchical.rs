//! Hierarchical Bayes: the mixture posterior over an α grid.
//!
//! cargo run --release --example hierarchical -- [n] [p]

use credball::adapt::{default_alpha_bound, eb_alpha, hb_posterior, HyperPrior};
use credball::model::{make_truth, simulate_observation, ModelConfig, TruthFamily};

fn main() -> credball::Result<()> {
    let mut args = std::env::args().skip(1);
    let n: u64 = args.next().map_or(10_000, |s| s.parse().expect("n"));
    let p: f64 = args.next().map_or(0.0, |s| s.parse().expect("p"));
    let cfg = ModelConfig::new(n, p)?;
    let truth = make_truth(TruthFamily::SelfSimilar, 1.0, 1.0, &cfg, 0)?;
    let obs = simulate_observation(&truth, &cfg, 2)?;

    let a_max = default_alpha_bound(n, 2.0);
    let hyper = HyperPrior::default_for(a_max)?;
    let hb = hb_posterior(&obs, &hyper, 64)?;
    let eb = eb_alpha(&obs, a_max, 1e-6)?;
    let s = hb.summary();
    println!(
        "posterior mean of alpha {:.4} (eb: {:.4}); {} of {} grid points materialized",
        s.mean_alpha,
        eb.estimate,
        s.active_components,
        s.grid.len()
    );
    println!(
        "mass within 0.1 of alpha_hat: {:.4}",
        hb.mass_near(eb.estimate, 0.1)
    );
    // a coarse picture of the weights
    for (a, w) in s.grid.iter().zip(&s.weights).step_by(4) {
        let bar = "#".repeat((w * 400.0).round() as usize);
        println!("{a:6.3} {w:9.3e} {bar}");
    }
    Ok(())
}
