//! Empirical Bayes: marginal likelihood maximization over α and over τ.
//!
//! cargo run --release --example fit_eb -- [n] [beta]

use credball::adapt::{default_alpha_bound, default_tau_bounds, eb_alpha, eb_tau};
use credball::conjugate::{fit_posterior, PriorParams};
use credball::model::{l2_norm, make_truth, simulate_observation, ModelConfig, TruthFamily};

fn main() -> credball::Result<()> {
    let mut args = std::env::args().skip(1);
    let n: u64 = args.next().map_or(10_000, |s| s.parse().expect("n"));
    let beta: f64 = args.next().map_or(1.0, |s| s.parse().expect("beta"));
    let cfg = ModelConfig::new(n, 0.0)?;
    let truth = make_truth(TruthFamily::SelfSimilar, beta, 1.0, &cfg, 0)?;
    let obs = simulate_observation(&truth, &cfg, 1)?;

    let a_max = default_alpha_bound(n, 2.0);
    let a = eb_alpha(&obs, a_max, 1e-6)?;
    println!(
        "eb_alpha: alpha_hat={:.6} on [0, {a_max:.4}] at_boundary={} objective={:.6} ({} evaluations)",
        a.estimate,
        a.at_boundary,
        a.objective,
        a.trace.len()
    );

    let t = eb_tau(&obs, 1.0, default_tau_bounds(n), 1e-6)?;
    println!(
        "eb_tau:   tau_hat={:.6} (alpha=1) at_boundary={} objective={:.6}",
        t.estimate, t.at_boundary, t.objective
    );

    for (label, params) in [
        ("alpha_hat", PriorParams::new(a.estimate, 1.0)?),
        ("tau_hat", PriorParams::new(1.0, t.estimate)?),
    ] {
        let post = fit_posterior(&obs, params)?;
        let err: Vec<f64> = post
            .mean
            .iter()
            .zip(&truth.theta)
            .map(|(m, t)| m - t)
            .collect();
        println!(
            "posterior mean at {label}: |mean - theta| = {:.5}",
            l2_norm(&err)
        );
    }
    Ok(())
}
