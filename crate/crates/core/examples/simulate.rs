//! Truth families, the polished-tail check, and one simulated observation.
//!
//! cargo run --example simulate -- [n] [p]

use credball::model::{
    is_polished_tail, make_truth, simulate_observation, ModelConfig, PolishedTailParams,
    SequenceDoc, TruthFamily,
};

fn main() -> credball::Result<()> {
    let mut args = std::env::args().skip(1);
    let n: u64 = args.next().map_or(1000, |s| s.parse().expect("n"));
    let p: f64 = args.next().map_or(0.0, |s| s.parse().expect("p"));
    let cfg = ModelConfig::new(n, p)?;
    println!("n={n} p={p} D={} noise sd={:.4e}", cfg.dim, cfg.noise_sd());

    let pt = PolishedTailParams::default();
    for family in [
        TruthFamily::SelfSimilar,
        TruthFamily::BlockGap,
        TruthFamily::SobolevRandom,
    ] {
        let truth = make_truth(family, 1.0, 1.0, &cfg, 7)?;
        let check = is_polished_tail(&truth, &pt);
        println!(
            "{family:>15}: |theta|={:.5} polished tail: {} (violating N: {:?})",
            truth.norm2, check.holds, check.violating_n
        );
    }

    let truth = make_truth(TruthFamily::SelfSimilar, 1.0, 1.0, &cfg, 0)?;
    let obs = simulate_observation(&truth, &cfg, 42)?;
    println!("first observations: {:?}", &obs.x[..4]);
    let doc = SequenceDoc::from_observation(&truth, &obs).to_json()?;
    println!("JSON document: {} bytes", doc.len());
    Ok(())
}
