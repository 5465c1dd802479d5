//! Credible band for the regression function: keep the posterior draws
//! closest to the mean and take their pointwise envelope.
//!
//! cargo run --release --example band -- [out_dir]

use std::path::PathBuf;

use credball::adapt::{default_alpha_bound, eb_alpha};
use credball::band::{band_file_name, emit, render_band, BandFormat, BandSpec};
use credball::conjugate::{fit_posterior, PriorParams};
use credball::model::{make_truth, simulate_observation, ModelConfig, TruthFamily};

fn main() -> credball::Result<()> {
    let out = PathBuf::from(
        std::env::args()
            .nth(1)
            .unwrap_or_else(|| "target/band-example".into()),
    );
    let cfg = ModelConfig::new(1000, 0.0)?;
    let truth = make_truth(TruthFamily::SelfSimilar, 1.0, 1.0, &cfg, 0)?;
    let obs = simulate_observation(&truth, &cfg, 4)?;
    let eb = eb_alpha(&obs, default_alpha_bound(cfg.n, 2.0), 1e-6)?;
    let post = fit_posterior(&obs, PriorParams::new(eb.estimate, 1.0)?)?;

    let spec = BandSpec::default();
    let band = render_band(&post, &spec, 11)?;
    let width = band
        .upper
        .iter()
        .zip(&band.lower)
        .map(|(u, l)| u - l)
        .fold(0.0, f64::max);
    println!(
        "kept {} of {} draws; widest point {width:.4}",
        band.kept, spec.draws
    );

    std::fs::create_dir_all(&out).map_err(|e| credball::Error::Usage(e.to_string()))?;
    for format in [BandFormat::Csv, BandFormat::Svg] {
        let path = out.join(band_file_name("eb_alpha", cfg.n, 11, format));
        emit(&band, format, &path)?;
        println!("{}", path.display());
    }
    Ok(())
}
