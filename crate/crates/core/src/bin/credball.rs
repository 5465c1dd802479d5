use std::fs;
use std::path::{Path, PathBuf};
use std::process::ExitCode;

use clap::{Args, Parser, Subcommand};
use serde_json::json;

use credball::adapt::{
    default_alpha_bound, default_tau_bounds, eb_alpha, eb_tau, hb_posterior, HyperPrior,
};
use credball::band::{band_file_name, emit, render_band, BandFormat, BandSpec};
use credball::conjugate::{fit_posterior, PriorParams};
use credball::credible::{BallMethod, CredibleSpec, RadiusMethod};
use credball::harness::{
    adapt_and_build, check_slope, compare_eb_hb, compare_files, coverage_files, expected_slope,
    run_coverage, unix_now, write_results, ExperimentConfig, MethodSettings,
};
use credball::model::{make_truth, simulate_observation, ModelConfig, SequenceDoc, TruthFamily};
use credball::sampling::PosteriorSampler;
use credball::{Error, Result};

#[derive(Parser)]
#[command(
    name = "credball",
    version,
    about = "Adaptive credible balls in the Gaussian sequence model"
)]
struct Cli {
    #[command(subcommand)]
    command: Command,
}

#[derive(Subcommand)]
enum Command {
    /// Generate a truth and one observation, written as JSON.
    Simulate(SimulateArgs),
    /// Adapt the hyperparameter on a stored observation.
    Fit(FitArgs),
    /// Credible ball (center, radius, blown-up radius) for a stored observation.
    Radius(RadiusArgs),
    /// Frequentist coverage over replicated data.
    Coverage(CoverageArgs),
    /// eb_alpha and hb on shared replicates.
    Compare(ExperimentArgs),
    /// Credible band of the regression function from posterior draws.
    Band(BandArgs),
}

#[derive(Args)]
struct SimulateArgs {
    #[arg(long, default_value = "self_similar")]
    family: TruthFamily,
    #[arg(long, default_value_t = 1.0)]
    beta: f64,
    #[arg(long, default_value_t = 1.0)]
    scale: f64,
    #[arg(long)]
    n: u64,
    #[arg(long, default_value_t = 0.0)]
    p: f64,
    /// Truncation dimension; defaults to max(2n, 10^4).
    #[arg(long)]
    dim: Option<usize>,
    /// Seed of the noise (and of sobolev_random coefficients).
    #[arg(long)]
    seed: u64,
    /// Output file; stdout when absent.
    #[arg(long)]
    out: Option<PathBuf>,
}

#[derive(Args)]
struct ObservationArgs {
    /// JSON document written by `simulate`.
    #[arg(long)]
    input: PathBuf,
    #[arg(long)]
    method: BallMethod,
    /// Upper end of the α range; defaults to A_n.
    #[arg(long)]
    a_max: Option<f64>,
    /// α used by eb_tau.
    #[arg(long, default_value_t = 1.0)]
    alpha: f64,
    #[arg(long, default_value_t = 1e-6)]
    tol: f64,
    #[arg(long, default_value_t = credball::harness::DEFAULT_HB_GRID)]
    grid: usize,
}

#[derive(Args)]
struct FitArgs {
    #[command(flatten)]
    obs: ObservationArgs,
}

#[derive(Args)]
struct RadiusArgs {
    #[command(flatten)]
    obs: ObservationArgs,
    #[arg(long, default_value_t = 0.05)]
    gamma: f64,
    /// Blow-up factor L.
    #[arg(long, default_value_t = 2.0)]
    blowup: f64,
    #[arg(long, default_value = "imhof")]
    radius: RadiusMethod,
    #[arg(long, default_value_t = credball::credible::DEFAULT_MC_COUNT)]
    mc_count: usize,
    #[arg(long, default_value_t = 0)]
    seed: u64,
    /// Write the ball JSON here instead of stdout.
    #[arg(long)]
    out: Option<PathBuf>,
}

#[derive(Args)]
struct ExperimentArgs {
    /// TOML or JSON experiment config.
    #[arg(long)]
    config: PathBuf,
    /// Master seed (overrides the config).
    #[arg(long)]
    seed: u64,
    #[arg(long, default_value = "results")]
    out: PathBuf,
    #[arg(long)]
    method: Option<BallMethod>,
    #[arg(long)]
    replicates: Option<usize>,
    /// Comma-separated sample sizes.
    #[arg(long, value_delimiter = ',')]
    n_list: Option<Vec<u64>>,
    #[arg(long)]
    p: Option<f64>,
    #[arg(long)]
    gamma: Option<f64>,
    #[arg(long)]
    blowup: Option<f64>,
}

impl ExperimentArgs {
    fn load(&self) -> Result<ExperimentConfig> {
        let mut c = ExperimentConfig::load(&self.config)?;
        c.master_seed = self.seed;
        if let Some(m) = self.method {
            c.method = m;
        }
        if let Some(r) = self.replicates {
            c.replicates = r;
        }
        if let Some(n) = &self.n_list {
            c.n_list = n.clone();
        }
        if let Some(p) = self.p {
            c.p = p;
        }
        if let Some(g) = self.gamma {
            c.spec.gamma = g;
        }
        if let Some(l) = self.blowup {
            c.spec.blowup = l;
        }
        c.validate()?;
        Ok(c)
    }
}

#[derive(Args)]
struct CoverageArgs {
    #[command(flatten)]
    exp: ExperimentArgs,
    /// Also check the log-radius slope against the rate for this regularity.
    #[arg(long)]
    check_slope: Option<f64>,
}

#[derive(Args)]
struct BandArgs {
    #[command(flatten)]
    obs: ObservationArgs,
    #[arg(long)]
    seed: u64,
    #[arg(long, default_value_t = 2000)]
    draws: usize,
    #[arg(long, default_value_t = 0.95)]
    keep_fraction: f64,
    #[arg(long, default_value_t = 512)]
    grid_points: usize,
    #[arg(long, default_value = "csv")]
    format: BandFormat,
    #[arg(long, default_value = ".")]
    out: PathBuf,
}

/// Assertion failures exit with 1; everything the caller can fix with 2.
enum Failure {
    Assertion(String),
    Lib(Error),
}

impl From<Error> for Failure {
    fn from(e: Error) -> Self {
        Failure::Lib(e)
    }
}

fn read_doc(path: &Path) -> Result<SequenceDoc> {
    let text =
        fs::read_to_string(path).map_err(|e| Error::Usage(format!("{}: {e}", path.display())))?;
    SequenceDoc::from_json(&text)
}

fn load_observation(args: &ObservationArgs) -> Result<credball::model::Observation> {
    read_doc(&args.input)?
        .observation()?
        .ok_or_else(|| Error::Usage(format!("{} holds no observation", args.input.display())))
}

fn settings(args: &ObservationArgs, n: u64, spec: CredibleSpec) -> Result<MethodSettings> {
    let a_max = args.a_max.unwrap_or_else(|| default_alpha_bound(n, 2.0));
    Ok(MethodSettings {
        spec,
        a_max,
        alpha_fixed: args.alpha,
        tau_bounds: default_tau_bounds(n),
        tol: args.tol,
        hyper: HyperPrior::default_for(a_max)?,
        hb_grid: args.grid,
        radius: RadiusMethod::Imhof,
        mc_count: credball::credible::DEFAULT_MC_COUNT,
    })
}

fn write_or_print(out: Option<&Path>, text: &str) -> Result<()> {
    match out {
        Some(p) => fs::write(p, text).map_err(|e| Error::Usage(format!("{}: {e}", p.display()))),
        None => {
            println!("{text}");
            Ok(())
        }
    }
}

fn simulate(a: &SimulateArgs) -> Result<()> {
    let cfg = match a.dim {
        Some(d) => ModelConfig::with_dim(a.n, a.p, d)?,
        None => ModelConfig::new(a.n, a.p)?,
    };
    let truth = make_truth(a.family, a.beta, a.scale, &cfg, a.seed)?;
    let obs = simulate_observation(&truth, &cfg, a.seed)?;
    write_or_print(
        a.out.as_deref(),
        &SequenceDoc::from_observation(&truth, &obs).to_json()?,
    )
}

fn fit(a: &FitArgs) -> Result<()> {
    let obs = load_observation(&a.obs)?;
    let s = settings(&a.obs, obs.config.n, CredibleSpec::default())?;
    let out = match a.obs.method {
        BallMethod::EbAlpha => {
            let r = eb_alpha(&obs, s.a_max, s.tol)?;
            json!({"method": "eb_alpha", "estimate": r.estimate, "objective": r.objective, "at_boundary": r.at_boundary})
        }
        BallMethod::EbTau => {
            let r = eb_tau(&obs, s.alpha_fixed, s.tau_bounds, s.tol)?;
            json!({"method": "eb_tau", "alpha": s.alpha_fixed, "estimate": r.estimate, "objective": r.objective, "at_boundary": r.at_boundary})
        }
        BallMethod::Hb => {
            let post = hb_posterior(&obs, &s.hyper, s.hb_grid)?;
            json!({"method": "hb", "a_max": s.a_max, "summary": post.summary()})
        }
    };
    println!("{}", serde_json::to_string_pretty(&out)?);
    Ok(())
}

fn radius(a: &RadiusArgs) -> Result<()> {
    let obs = load_observation(&a.obs)?;
    let mut s = settings(&a.obs, obs.config.n, CredibleSpec::new(a.gamma, a.blowup)?)?;
    s.radius = a.radius;
    s.mc_count = a.mc_count;
    let fit = adapt_and_build(&obs, a.obs.method, &s, a.seed)?;
    if let Some(w) = &fit.radius.warning {
        eprintln!("warning: {w}");
    }
    write_or_print(a.out.as_deref(), &fit.ball.to_json()?)
}

fn coverage(a: &CoverageArgs) -> std::result::Result<(), Failure> {
    let started = unix_now();
    let config = a.exp.load()?;
    let expected = a
        .check_slope
        .map(|beta| expected_slope(config.method, beta, config.p, config.alpha_fixed))
        .transpose()?;
    let report = run_coverage(&config)?;
    let mut files = coverage_files(&report)?;
    let check = expected.map(|e| check_slope(&report, e)).transpose()?;
    if let Some(c) = &check {
        files.push((
            "slope_check.json".into(),
            serde_json::to_string_pretty(c).map_err(Error::from)? + "\n",
        ));
    }
    let manifest = write_results(&a.exp.out, "coverage", &config, started, &files)?;
    for r in &report.rows {
        println!(
            "n={} coverage={:.4} se={:.4} mean_radius={:.6e} failures={}",
            r.n, r.coverage, r.se, r.mean_radius, r.failures
        );
    }
    println!(
        "min coverage {:.4}; manifest {}",
        report.min_coverage,
        manifest.display()
    );
    match check {
        Some(c) if !c.passed => Err(Failure::Assertion(c.message())),
        Some(c) => {
            println!("{}", c.message());
            Ok(())
        }
        None => Ok(()),
    }
}

fn compare(a: &ExperimentArgs) -> Result<()> {
    let started = unix_now();
    let config = a.load()?;
    let report = compare_eb_hb(&config)?;
    let manifest = write_results(
        &a.out,
        "compare",
        &config,
        started,
        &compare_files(&report)?,
    )?;
    for r in &report.rows {
        println!(
            "n={} coverage_eb={:.4} coverage_hb={:.4} difference={:+.4} paired_se={:.4} proximity={:.4}",
            r.n, r.coverage_eb, r.coverage_hb, r.difference, r.paired_se, r.proximity
        );
    }
    println!("manifest {}", manifest.display());
    Ok(())
}

fn band(a: &BandArgs) -> Result<()> {
    let obs = load_observation(&a.obs)?;
    let s = settings(&a.obs, obs.config.n, CredibleSpec::default())?;
    let spec = BandSpec {
        draws: a.draws,
        keep_fraction: a.keep_fraction,
        grid_points: a.grid_points,
        ..BandSpec::default()
    };
    let source: Box<dyn PosteriorSampler> = match a.obs.method {
        BallMethod::EbAlpha => {
            let r = eb_alpha(&obs, s.a_max, s.tol)?;
            Box::new(fit_posterior(&obs, PriorParams::new(r.estimate, 1.0)?)?)
        }
        BallMethod::EbTau => {
            let r = eb_tau(&obs, s.alpha_fixed, s.tau_bounds, s.tol)?;
            Box::new(fit_posterior(
                &obs,
                PriorParams::new(s.alpha_fixed, r.estimate)?,
            )?)
        }
        BallMethod::Hb => Box::new(hb_posterior(&obs, &s.hyper, s.hb_grid)?),
    };
    let band = render_band(source.as_ref(), &spec, a.seed)?;
    fs::create_dir_all(&a.out).map_err(|e| Error::Usage(format!("{}: {e}", a.out.display())))?;
    let path = a.out.join(band_file_name(
        a.obs.method.as_str(),
        obs.config.n,
        a.seed,
        a.format,
    ));
    emit(&band, a.format, &path)?;
    println!("{}", path.display());
    Ok(())
}

fn main() -> ExitCode {
    let cli = Cli::parse();
    let outcome = match &cli.command {
        Command::Simulate(a) => simulate(a).map_err(Failure::from),
        Command::Fit(a) => fit(a).map_err(Failure::from),
        Command::Radius(a) => radius(a).map_err(Failure::from),
        Command::Coverage(a) => coverage(a),
        Command::Compare(a) => compare(a).map_err(Failure::from),
        Command::Band(a) => band(a).map_err(Failure::from),
    };
    match outcome {
        Ok(()) => ExitCode::SUCCESS,
        Err(Failure::Assertion(m)) => {
            eprintln!("assertion failed: {m}");
            ExitCode::from(1)
        }
        Err(Failure::Lib(e)) => {
            eprintln!("error: {e}");
            match e {
                Error::Numeric(_) => ExitCode::from(1),
                _ => ExitCode::from(2),
            }
        }
    }
}
