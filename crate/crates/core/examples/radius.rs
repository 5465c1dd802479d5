//! Credible radii: characteristic-function inversion against Monte Carlo,
//! for a fixed-α posterior and for the HB mixture.
//!
//! cargo run --release --example radius

use credball::adapt::{default_alpha_bound, hb_posterior, HyperPrior};
use credball::conjugate::{fit_posterior, PriorParams};
use credball::credible::{
    build_ball, radius_fixed, radius_mixture, radius_mixture_imhof, BallMethod, CredibleSpec,
    RadiusMethod,
};
use credball::model::{make_truth, simulate_observation, ModelConfig, TruthFamily};

fn main() -> credball::Result<()> {
    let cfg = ModelConfig::new(2000, 0.0)?;
    let truth = make_truth(TruthFamily::SelfSimilar, 1.0, 1.0, &cfg, 0)?;
    let obs = simulate_observation(&truth, &cfg, 3)?;
    let gamma = 0.05;

    let post = fit_posterior(&obs, PriorParams::new(1.0, 1.0)?)?;
    let exact = radius_fixed(&post, gamma, RadiusMethod::Imhof, 0, 0)?;
    let mc = radius_fixed(&post, gamma, RadiusMethod::Mc, 200_000, 9)?;
    println!(
        "fixed alpha=1: imhof {:.6}  mc {:.6} ± {:.1e}",
        exact.radius, mc.radius, mc.se
    );

    let hyper = HyperPrior::default_for(default_alpha_bound(cfg.n, 2.0))?;
    let hb = hb_posterior(&obs, &hyper, 64)?;
    let exact = radius_mixture_imhof(&hb, gamma)?;
    let mc = radius_mixture(&hb, gamma, 50_000, 9)?;
    println!(
        "hb mixture:    imhof {:.6}  mc {:.6} ± {:.1e}",
        exact.radius, mc.radius, mc.se
    );

    let ball = build_ball(
        hb.mean.clone(),
        &exact,
        CredibleSpec::new(gamma, 2.0)?,
        BallMethod::Hb,
    )?;
    println!(
        "truth at distance {:.5}; blown-up radius {:.5}; covered: {}",
        ball.distance(&truth.theta)?,
        ball.blown_radius,
        ball.contains(&truth.theta)?
    );
    Ok(())
}
