//! Monte Carlo experiments: frequentist coverage of credible balls over
//! replicated data sets, EB versus HB on shared data, and log-log fits of the
//! mean radius against `n`.
//!
//! Replicate `r` at sample size `n` uses the seed
//! `replicate_seed(master_seed, n, r)`; the observation and any Monte Carlo
//! radius draw from independent sub-seeds of it. Replicates run in parallel
//! and are collected in `(n, r)` order, and all aggregates are computed from
//! sorted values, so reports do not depend on scheduling.

use std::fs;
use std::path::{Path, PathBuf};
use std::time::{SystemTime, UNIX_EPOCH};

use rayon::prelude::*;
use serde::{Deserialize, Serialize};
use sha2::{Digest, Sha256};

use crate::adapt::{
    default_alpha_bound, default_tau_bounds, eb_alpha, eb_tau, hb_posterior, HyperPrior,
};
use crate::conjugate::{fit_posterior, Accum, PriorParams};
use crate::credible::{
    build_ball, radius_fixed, radius_mixture, radius_mixture_imhof, slowly_varying_blowup,
    BallMethod, CredibleBall, CredibleSpec, RadiusEstimate, RadiusMethod, DEFAULT_MC_COUNT,
};
use crate::error::{Error, Result};
use crate::model::{
    make_truth, simulate_observation, ModelConfig, Observation, PolishedTailParams, Truth,
    TruthFamily,
};
use crate::rng::{replicate_seed, sub_seed};

pub const CONFIG_SCHEMA_VERSION: u32 = 1;
/// Largest tolerated fraction of failed replicates per `n`.
pub const MAX_FAILURE_FRACTION: f64 = 0.01;
pub const SLOPE_TOLERANCE: f64 = 0.07;
pub const DEFAULT_HB_GRID: usize = 64;

const SEED_TAG_DATA: u64 = 0;
const SEED_TAG_RADIUS: u64 = 1;

#[derive(Clone, Copy, Debug, PartialEq, Serialize, Deserialize)]
#[serde(deny_unknown_fields)]
pub struct TruthSpec {
    pub family: TruthFamily,
    #[serde(default = "one")]
    pub beta: f64,
    #[serde(default = "one")]
    pub scale: f64,
    /// Only used by `sobolev_random`.
    #[serde(default)]
    pub seed: u64,
}

impl TruthSpec {
    pub fn build(&self, config: &ModelConfig) -> Result<Truth> {
        make_truth(self.family, self.beta, self.scale, config, self.seed)
    }
}

fn one() -> f64 {
    1.0
}
fn schema_version() -> u32 {
    CONFIG_SCHEMA_VERSION
}
fn default_replicates() -> usize {
    500
}
fn default_tol() -> f64 {
    1e-6
}
fn default_hb_grid() -> usize {
    DEFAULT_HB_GRID
}
fn default_mc_count() -> usize {
    DEFAULT_MC_COUNT
}

#[derive(Clone, Copy, Debug, PartialEq, Eq, Default, Serialize, Deserialize)]
#[serde(rename_all = "snake_case")]
pub enum BlowupRule {
    /// `spec.L` as given.
    #[default]
    Fixed,
    /// `(3ρ^{3(1+2p)})^{A}` with the `A` used at each `n`.
    SlowlyVarying,
}

#[derive(Clone, Debug, PartialEq, Serialize, Deserialize)]
#[serde(deny_unknown_fields)]
pub struct ExperimentConfig {
    #[serde(default = "schema_version")]
    pub schema_version: u32,
    pub method: BallMethod,
    pub truth: TruthSpec,
    #[serde(default)]
    pub p: f64,
    pub n_list: Vec<u64>,
    #[serde(default = "default_replicates")]
    pub replicates: usize,
    #[serde(default)]
    pub spec: CredibleSpec,
    #[serde(default)]
    pub blowup: BlowupRule,
    #[serde(default)]
    pub pt: PolishedTailParams,
    /// Hyperprior for `hb`; defaults to the standard one on `(0, A]`.
    #[serde(default)]
    pub hyper: Option<HyperPrior>,
    #[serde(default)]
    pub master_seed: u64,
    /// Fixed `A`; defaults to `A_n` at each `n`.
    #[serde(default)]
    pub a_max: Option<f64>,
    /// `α` used by `eb_tau`.
    #[serde(default = "one")]
    pub alpha_fixed: f64,
    /// `τ` search range for `eb_tau`; defaults to `[n^{-1/2}, n^{1/2}]`.
    #[serde(default)]
    pub tau_bounds: Option<(f64, f64)>,
    #[serde(default = "default_tol")]
    pub tol: f64,
    #[serde(default = "default_hb_grid")]
    pub hb_grid: usize,
    #[serde(default)]
    pub radius: RadiusMethod,
    #[serde(default = "default_mc_count")]
    pub mc_count: usize,
    /// Truncation dimension; defaults to `max(2n, 10⁴)`.
    #[serde(default)]
    pub dim: Option<usize>,
}

impl ExperimentConfig {
    /// Defaults for everything except the method, truth and `n` grid.
    pub fn new(method: BallMethod, truth: TruthSpec, n_list: Vec<u64>) -> Self {
        Self {
            schema_version: CONFIG_SCHEMA_VERSION,
            method,
            truth,
            p: 0.0,
            n_list,
            replicates: default_replicates(),
            spec: CredibleSpec::default(),
            blowup: BlowupRule::Fixed,
            pt: PolishedTailParams::default(),
            hyper: None,
            master_seed: 0,
            a_max: None,
            alpha_fixed: 1.0,
            tau_bounds: None,
            tol: default_tol(),
            hb_grid: DEFAULT_HB_GRID,
            radius: RadiusMethod::Imhof,
            mc_count: DEFAULT_MC_COUNT,
            dim: None,
        }
    }

    pub fn validate(&self) -> Result<()> {
        let bad = |m: String| Err(Error::Config(m));
        if self.schema_version != CONFIG_SCHEMA_VERSION {
            return bad(format!(
                "unsupported config schema_version {} (expected {CONFIG_SCHEMA_VERSION})",
                self.schema_version
            ));
        }
        if self.replicates < 1 {
            return bad("replicates must be at least 1".into());
        }
        if self.n_list.is_empty() || self.n_list.windows(2).any(|w| w[1] <= w[0]) {
            return bad("n_list must be non-empty and strictly increasing".into());
        }
        if self.n_list.iter().any(|&n| n == 0 || n >= 1 << 32) || self.replicates as u64 >= 1 << 32
        {
            return bad("n and replicate indices must lie in [1, 2^32)".into());
        }
        if self.truth.family == TruthFamily::Custom {
            return bad("experiments need a generated truth family".into());
        }
        self.spec.validate()?;
        self.pt
            .validate()
            .map_err(|e| Error::Config(e.to_string()))?;
        if let Some(h) = &self.hyper {
            h.validate().map_err(|e| Error::Config(e.to_string()))?;
        }
        if let Some(a) = self.a_max {
            if !(a > 0.0 && a.is_finite()) {
                return bad(format!("a_max must be positive, got {a}"));
            }
        }
        if let Some((lo, hi)) = self.tau_bounds {
            if !(lo > 0.0 && hi > lo && hi.is_finite()) {
                return bad(format!(
                    "tau_bounds must satisfy 0 < low < high, got ({lo}, {hi})"
                ));
            }
        }
        if !(self.tol > 0.0) {
            return bad("tol must be positive".into());
        }
        if self.hb_grid < 16 {
            return bad("hb_grid must be at least 16".into());
        }
        if self.radius == RadiusMethod::Mc && self.mc_count < 1 {
            return bad("mc_count must be positive".into());
        }
        for &n in &self.n_list {
            self.model_config(n)?;
        }
        Ok(())
    }

    pub fn model_config(&self, n: u64) -> Result<ModelConfig> {
        match self.dim {
            Some(d) => ModelConfig::with_dim(n, self.p, d),
            None => ModelConfig::new(n, self.p),
        }
    }

    /// Method settings at sample size `n`.
    pub fn settings(&self, n: u64) -> Result<MethodSettings> {
        let a_max = self
            .a_max
            .unwrap_or_else(|| default_alpha_bound(n, self.pt.rho));
        let hyper = match self.hyper {
            Some(h) => h,
            None => HyperPrior::default_for(a_max)?,
        };
        let mut spec = self.spec;
        if self.blowup == BlowupRule::SlowlyVarying {
            spec.blowup = slowly_varying_blowup(self.pt.rho, self.p, a_max);
        }
        Ok(MethodSettings {
            spec,
            a_max,
            alpha_fixed: self.alpha_fixed,
            tau_bounds: self.tau_bounds.unwrap_or_else(|| default_tau_bounds(n)),
            tol: self.tol,
            hyper,
            hb_grid: self.hb_grid,
            radius: self.radius,
            mc_count: self.mc_count,
        })
    }

    pub fn from_toml(text: &str) -> Result<Self> {
        let c: Self = toml::from_str(text).map_err(|e| Error::Config(e.to_string()))?;
        c.validate()?;
        Ok(c)
    }

    pub fn from_json(text: &str) -> Result<Self> {
        let c: Self = serde_json::from_str(text).map_err(|e| Error::Config(e.to_string()))?;
        c.validate()?;
        Ok(c)
    }

    /// Reads a `.toml` or `.json` file (by extension; TOML otherwise).
    pub fn load(path: &Path) -> Result<Self> {
        let text = fs::read_to_string(path).map_err(|e| Error::io(path, e))?;
        let parsed = if path.extension().is_some_and(|e| e == "json") {
            Self::from_json(&text)
        } else {
            Self::from_toml(&text)
        };
        parsed.map_err(|e| match e {
            Error::Config(m) => Error::Config(format!("{}: {m}", path.display())),
            other => other,
        })
    }

    /// SHA-256 of the canonical JSON form.
    pub fn hash(&self) -> String {
        let json = serde_json::to_string(self).expect("config serializes");
        hex::encode(Sha256::digest(json.as_bytes()))
    }
}

/// Everything a method needs to turn one observation into a ball.
#[derive(Clone, Copy, Debug, PartialEq, Serialize, Deserialize)]
pub struct MethodSettings {
    pub spec: CredibleSpec,
    pub a_max: f64,
    pub alpha_fixed: f64,
    pub tau_bounds: (f64, f64),
    pub tol: f64,
    pub hyper: HyperPrior,
    pub hb_grid: usize,
    pub radius: RadiusMethod,
    pub mc_count: usize,
}

impl MethodSettings {
    pub fn for_observation(obs: &Observation, spec: CredibleSpec, rho: f64) -> Result<Self> {
        let n = obs.config.n;
        let a_max = default_alpha_bound(n, rho);
        Ok(Self {
            spec,
            a_max,
            alpha_fixed: 1.0,
            tau_bounds: default_tau_bounds(n),
            tol: default_tol(),
            hyper: HyperPrior::default_for(a_max)?,
            hb_grid: DEFAULT_HB_GRID,
            radius: RadiusMethod::Imhof,
            mc_count: DEFAULT_MC_COUNT,
        })
    }
}

/// A fitted ball together with the adapted hyperparameter.
#[derive(Clone, Debug, PartialEq)]
pub struct Adapted {
    pub ball: CredibleBall,
    pub radius: RadiusEstimate,
    /// `α̂` (eb_alpha), `τ̂` (eb_tau) or the posterior mean of `α` (hb).
    pub estimate: f64,
    pub at_boundary: bool,
}

/// Adapts the hyperparameter, computes the radius and assembles the ball.
/// `seed` only matters for Monte Carlo radii.
pub fn adapt_and_build(
    obs: &Observation,
    method: BallMethod,
    s: &MethodSettings,
    seed: u64,
) -> Result<Adapted> {
    let gamma = s.spec.gamma;
    let (center, radius, estimate, at_boundary) = match method {
        BallMethod::EbAlpha | BallMethod::EbTau => {
            let (params, eb) = if method == BallMethod::EbAlpha {
                let eb = eb_alpha(obs, s.a_max, s.tol)?;
                (PriorParams::new(eb.estimate, 1.0)?, eb)
            } else {
                let eb = eb_tau(obs, s.alpha_fixed, s.tau_bounds, s.tol)?;
                (PriorParams::new(s.alpha_fixed, eb.estimate)?, eb)
            };
            let post = fit_posterior(obs, params)?;
            let radius = radius_fixed(&post, gamma, s.radius, s.mc_count, seed)?;
            (post.mean, radius, eb.estimate, eb.at_boundary)
        }
        BallMethod::Hb => {
            let post = hb_posterior(obs, &s.hyper, s.hb_grid)?;
            let radius = match s.radius {
                RadiusMethod::Imhof => radius_mixture_imhof(&post, gamma)?,
                RadiusMethod::Mc => radius_mixture(&post, gamma, s.mc_count, seed)?,
            };
            let mean_alpha = post.mean_alpha();
            (post.mean, radius, mean_alpha, false)
        }
    };
    let ball = build_ball(center, &radius, s.spec, method)?;
    Ok(Adapted {
        ball,
        radius,
        estimate,
        at_boundary,
    })
}

/// Outcome of one replicate.
#[derive(Clone, Debug, PartialEq, Serialize, Deserialize)]
pub struct ReplicateRow {
    pub n: u64,
    pub r: u64,
    pub seed: u64,
    pub covered: bool,
    pub distance: f64,
    pub radius: f64,
    pub blown_radius: f64,
    pub estimate: f64,
    pub at_boundary: bool,
}

#[derive(Clone, Debug, PartialEq, Serialize, Deserialize)]
pub struct CoverageRow {
    pub n: u64,
    pub replicates: usize,
    pub failures: usize,
    pub coverage: f64,
    pub se: f64,
    pub mean_radius: f64,
    pub mean_estimate: f64,
    pub boundary_fraction: f64,
}

#[derive(Clone, Copy, Debug, PartialEq, Serialize, Deserialize)]
pub struct SlopeFit {
    pub slope: f64,
    pub intercept: f64,
    pub stderr: f64,
    pub r2: f64,
}

#[derive(Clone, Debug, PartialEq, Serialize, Deserialize)]
pub struct CoverageReport {
    pub method: BallMethod,
    pub rows: Vec<CoverageRow>,
    pub min_coverage: f64,
    /// `log mean_radius` against `log n`; absent with fewer than two sizes.
    pub slope_fit: Option<SlopeFit>,
    /// Coverage targets are finite-n harness thresholds, not asymptotic claims.
    pub note: String,
    #[serde(skip)]
    pub replicate_rows: Vec<ReplicateRow>,
}

/// Least-squares fit of `ln y` on `ln x`.
pub fn fit_slope(x: &[f64], y: &[f64]) -> Option<SlopeFit> {
    if x.len() != y.len() || x.len() < 2 {
        return None;
    }
    let lx: Vec<f64> = x.iter().map(|v| v.ln()).collect();
    let ly: Vec<f64> = y.iter().map(|v| v.ln()).collect();
    let k = lx.len() as f64;
    let mx = lx.iter().sum::<f64>() / k;
    let my = ly.iter().sum::<f64>() / k;
    let sxx: f64 = lx.iter().map(|a| (a - mx) * (a - mx)).sum();
    let sxy: f64 = lx.iter().zip(&ly).map(|(a, b)| (a - mx) * (b - my)).sum();
    let syy: f64 = ly.iter().map(|b| (b - my) * (b - my)).sum();
    if !(sxx > 0.0) {
        return None;
    }
    let slope = sxy / sxx;
    let intercept = my - slope * mx;
    let sse: f64 = lx
        .iter()
        .zip(&ly)
        .map(|(a, b)| (b - intercept - slope * a).powi(2))
        .sum();
    let stderr = if lx.len() > 2 {
        (sse / (k - 2.0) / sxx).sqrt()
    } else {
        0.0
    };
    let r2 = if syy > 0.0 { 1.0 - sse / syy } else { 1.0 };
    Some(SlopeFit {
        slope,
        intercept,
        stderr,
        r2,
    })
}

/// Order-independent mean: Neumaier sum over the sorted values.
fn stable_mean(values: &mut [f64]) -> f64 {
    if values.is_empty() {
        return f64::NAN;
    }
    values.sort_unstable_by(|a, b| a.total_cmp(b));
    let mut acc = Accum::default();
    for v in values.iter() {
        acc.add(*v);
    }
    acc.value() / values.len() as f64
}

fn median(values: &mut [f64]) -> f64 {
    values.sort_unstable_by(|a, b| a.total_cmp(b));
    let k = values.len();
    if k == 0 {
        f64::NAN
    } else if k % 2 == 1 {
        values[k / 2]
    } else {
        0.5 * (values[k / 2 - 1] + values[k / 2])
    }
}

fn check_failures(n: u64, failures: usize, replicates: usize, first: Option<&str>) -> Result<()> {
    if failures as f64 > MAX_FAILURE_FRACTION * replicates as f64 {
        return Err(Error::Numeric(format!(
            "{failures} of {replicates} replicates failed at n={n} (limit {:.0}%); first failure: {}",
            100.0 * MAX_FAILURE_FRACTION,
            first.unwrap_or("?")
        )));
    }
    Ok(())
}

fn replicate_data(
    config: &ExperimentConfig,
    truth: &Truth,
    model: &ModelConfig,
    r: u64,
) -> Result<(u64, Observation)> {
    let seed = replicate_seed(config.master_seed, model.n, r);
    let obs = simulate_observation(truth, model, sub_seed(seed, SEED_TAG_DATA))?;
    Ok((seed, obs))
}

fn run_replicate(
    config: &ExperimentConfig,
    settings: &MethodSettings,
    truth: &Truth,
    model: &ModelConfig,
    r: u64,
) -> Result<ReplicateRow> {
    let (seed, obs) = replicate_data(config, truth, model, r)?;
    let fit = adapt_and_build(
        &obs,
        config.method,
        settings,
        sub_seed(seed, SEED_TAG_RADIUS),
    )?;
    let distance = fit.ball.distance(&truth.theta)?;
    Ok(ReplicateRow {
        n: model.n,
        r,
        seed,
        covered: distance <= fit.ball.blown_radius,
        distance,
        radius: fit.ball.radius,
        blown_radius: fit.ball.blown_radius,
        estimate: fit.estimate,
        at_boundary: fit.at_boundary,
    })
}

/// Aggregates the successful replicates at one `n`.
pub fn summarize(n: u64, replicates: usize, rows: &[ReplicateRow]) -> CoverageRow {
    let ok = rows.len();
    let covered = rows.iter().filter(|r| r.covered).count();
    let coverage = if ok > 0 {
        covered as f64 / ok as f64
    } else {
        f64::NAN
    };
    let mut radii: Vec<f64> = rows.iter().map(|r| r.radius).collect();
    let mut est: Vec<f64> = rows.iter().map(|r| r.estimate).collect();
    CoverageRow {
        n,
        replicates,
        failures: replicates - ok,
        coverage,
        se: (coverage * (1.0 - coverage) / ok as f64).sqrt(),
        mean_radius: stable_mean(&mut radii),
        mean_estimate: stable_mean(&mut est),
        boundary_fraction: rows.iter().filter(|r| r.at_boundary).count() as f64 / ok.max(1) as f64,
    }
}

pub const COVERAGE_NOTE: &str =
    "coverage is asymptotic in theory; finite-n thresholds such as 0.95 are harness conventions";

/// Frequentist coverage of the configured ball over replicated data.
pub fn run_coverage(config: &ExperimentConfig) -> Result<CoverageReport> {
    config.validate()?;
    let mut rows = Vec::with_capacity(config.n_list.len());
    let mut all = Vec::new();
    for &n in &config.n_list {
        let model = config.model_config(n)?;
        let truth = config.truth.build(&model)?;
        let settings = config.settings(n)?;
        log::info!(
            "coverage {} n={n}: {} replicates",
            config.method,
            config.replicates
        );
        let results: Vec<Result<ReplicateRow>> = (0..config.replicates as u64)
            .into_par_iter()
            .map(|r| run_replicate(config, &settings, &truth, &model, r))
            .collect();
        let mut ok = Vec::with_capacity(results.len());
        let mut first_err = None;
        for res in results {
            match res {
                Ok(row) => ok.push(row),
                Err(e) => {
                    log::warn!("replicate failed at n={n}: {e}");
                    first_err.get_or_insert(e.to_string());
                }
            }
        }
        let failures = config.replicates - ok.len();
        check_failures(n, failures, config.replicates, first_err.as_deref())?;
        rows.push(summarize(n, config.replicates, &ok));
        all.extend(ok);
    }
    let ns: Vec<f64> = rows.iter().map(|r| r.n as f64).collect();
    let radii: Vec<f64> = rows.iter().map(|r| r.mean_radius).collect();
    Ok(CoverageReport {
        method: config.method,
        min_coverage: rows
            .iter()
            .map(|r| r.coverage)
            .fold(f64::INFINITY, f64::min),
        slope_fit: fit_slope(&ns, &radii),
        rows,
        note: COVERAGE_NOTE.into(),
        replicate_rows: all,
    })
}

#[derive(Clone, Debug, PartialEq, Serialize, Deserialize)]
pub struct PairedRow {
    pub n: u64,
    pub r: u64,
    pub seed: u64,
    pub covered_eb: bool,
    pub covered_hb: bool,
    pub radius_eb: f64,
    pub radius_hb: f64,
    pub alpha_eb: f64,
    pub alpha_hb: f64,
    /// `‖θ̂_EB − θ̂_HB‖₂`
    pub center_distance: f64,
}

#[derive(Clone, Debug, PartialEq, Serialize, Deserialize)]
pub struct CompareRow {
    pub n: u64,
    pub replicates: usize,
    pub failures: usize,
    pub coverage_eb: f64,
    pub coverage_hb: f64,
    /// `coverage_eb − coverage_hb`
    pub difference: f64,
    /// Standard error of the mean paired difference.
    pub paired_se: f64,
    pub mean_radius_eb: f64,
    pub mean_radius_hb: f64,
    pub median_center_distance: f64,
    /// Median center distance over the mean of the two mean radii.
    pub proximity: f64,
}

#[derive(Clone, Debug, PartialEq, Serialize, Deserialize)]
pub struct CompareReport {
    pub rows: Vec<CompareRow>,
    #[serde(skip)]
    pub pairs: Vec<PairedRow>,
}

fn run_pair(
    config: &ExperimentConfig,
    settings: &MethodSettings,
    truth: &Truth,
    model: &ModelConfig,
    r: u64,
) -> Result<PairedRow> {
    let (seed, obs) = replicate_data(config, truth, model, r)?;
    let rseed = sub_seed(seed, SEED_TAG_RADIUS);
    let eb = adapt_and_build(&obs, BallMethod::EbAlpha, settings, rseed)?;
    let hb = adapt_and_build(&obs, BallMethod::Hb, settings, rseed)?;
    Ok(PairedRow {
        n: model.n,
        r,
        seed,
        covered_eb: eb.ball.contains(&truth.theta)?,
        covered_hb: hb.ball.contains(&truth.theta)?,
        radius_eb: eb.ball.radius,
        radius_hb: hb.ball.radius,
        alpha_eb: eb.estimate,
        alpha_hb: hb.estimate,
        center_distance: eb.ball.distance(&hb.ball.center)?,
    })
}

/// Runs `eb_alpha` and `hb` on the same replicated observations.
pub fn compare_eb_hb(config: &ExperimentConfig) -> Result<CompareReport> {
    config.validate()?;
    let mut rows = Vec::new();
    let mut pairs = Vec::new();
    for &n in &config.n_list {
        let model = config.model_config(n)?;
        let truth = config.truth.build(&model)?;
        let settings = config.settings(n)?;
        log::info!("compare n={n}: {} replicates", config.replicates);
        let results: Vec<Result<PairedRow>> = (0..config.replicates as u64)
            .into_par_iter()
            .map(|r| run_pair(config, &settings, &truth, &model, r))
            .collect();
        let mut ok = Vec::new();
        let mut first_err = None;
        for res in results {
            match res {
                Ok(p) => ok.push(p),
                Err(e) => {
                    first_err.get_or_insert(e.to_string());
                }
            }
        }
        check_failures(
            n,
            config.replicates - ok.len(),
            config.replicates,
            first_err.as_deref(),
        )?;
        rows.push(summarize_pairs(n, config.replicates, &ok));
        pairs.extend(ok);
    }
    Ok(CompareReport { rows, pairs })
}

pub fn summarize_pairs(n: u64, replicates: usize, pairs: &[PairedRow]) -> CompareRow {
    let k = pairs.len() as f64;
    let ce = pairs.iter().filter(|p| p.covered_eb).count() as f64 / k;
    let ch = pairs.iter().filter(|p| p.covered_hb).count() as f64 / k;
    let diff = ce - ch;
    // d_r ∈ {−1, 0, 1}; its sample variance from counts keeps this order-free
    let sq = pairs
        .iter()
        .filter(|p| p.covered_eb != p.covered_hb)
        .count() as f64
        / k;
    let var = if k > 1.0 {
        (sq - diff * diff) * k / (k - 1.0)
    } else {
        0.0
    };
    let mut re: Vec<f64> = pairs.iter().map(|p| p.radius_eb).collect();
    let mut rh: Vec<f64> = pairs.iter().map(|p| p.radius_hb).collect();
    let mut cd: Vec<f64> = pairs.iter().map(|p| p.center_distance).collect();
    let (mre, mrh) = (stable_mean(&mut re), stable_mean(&mut rh));
    let mcd = median(&mut cd);
    CompareRow {
        n,
        replicates,
        failures: replicates - pairs.len(),
        coverage_eb: ce,
        coverage_hb: ch,
        difference: diff,
        paired_se: (var.max(0.0) / k).sqrt(),
        mean_radius_eb: mre,
        mean_radius_hb: mrh,
        median_center_distance: mcd,
        proximity: mcd / (0.5 * (mre + mrh)),
    }
}

/// Expected slope of `log radius` against `log n` for a truth of regularity `β`.
///
/// `−β/(1+2β+2p)` when the method adapts to `β` (eb_alpha, hb, and eb_tau
/// with `β ≤ α + ½`); `−(1+2α)/(4+4α)` for eb_tau with `β > α + ½`, `p = 0`.
pub fn expected_slope(method: BallMethod, beta: f64, p: f64, alpha: f64) -> Result<f64> {
    let adaptive = -beta / (1.0 + 2.0 * beta + 2.0 * p);
    match method {
        BallMethod::EbAlpha | BallMethod::Hb => Ok(adaptive),
        BallMethod::EbTau if beta <= alpha + 0.5 => Ok(adaptive),
        BallMethod::EbTau if p == 0.0 => Ok(-(1.0 + 2.0 * alpha) / (4.0 + 4.0 * alpha)),
        BallMethod::EbTau => Err(Error::Usage(
            "no reference slope for eb_tau with beta > alpha + 1/2 and p != 0".into(),
        )),
    }
}

#[derive(Clone, Debug, PartialEq, Serialize, Deserialize)]
pub struct SlopeCheck {
    pub expected: f64,
    pub fitted: SlopeFit,
    pub tolerance: f64,
    pub passed: bool,
}

impl SlopeCheck {
    pub fn message(&self) -> String {
        format!(
            "fitted slope {:.4} (stderr {:.4}) vs expected {:.4}, tolerance {}: {}",
            self.fitted.slope,
            self.fitted.stderr,
            self.expected,
            self.tolerance,
            if self.passed { "pass" } else { "FAIL" }
        )
    }
}

pub fn check_slope(report: &CoverageReport, expected: f64) -> Result<SlopeCheck> {
    let fitted = report
        .slope_fit
        .ok_or_else(|| Error::Usage("slope check needs at least two sample sizes".into()))?;
    Ok(SlopeCheck {
        expected,
        fitted,
        tolerance: SLOPE_TOLERANCE,
        passed: (fitted.slope - expected).abs() <= SLOPE_TOLERANCE,
    })
}

/// Runs the coverage experiment and compares the radius slope with the rate
/// for regularity `target_regularity`. `n_list` must span two decades.
pub fn rate_slope(
    config: &ExperimentConfig,
    target_regularity: f64,
) -> Result<(CoverageReport, SlopeCheck)> {
    let span = match (config.n_list.first(), config.n_list.last()) {
        (Some(&a), Some(&b)) => b as f64 / a as f64,
        _ => 0.0,
    };
    if span < 100.0 {
        return Err(Error::Usage(
            "rate_slope needs n_list spanning at least two decades".into(),
        ));
    }
    let expected = expected_slope(
        config.method,
        target_regularity,
        config.p,
        config.alpha_fixed,
    )?;
    let report = run_coverage(config)?;
    let check = check_slope(&report, expected)?;
    Ok((report, check))
}

// ---- result files ----

fn csv_bool(b: bool) -> u8 {
    b as u8
}

pub fn coverage_csv(report: &CoverageReport) -> String {
    let mut s = String::from(
        "n,replicates,failures,coverage,se,mean_radius,mean_estimate,boundary_fraction\n",
    );
    for r in &report.rows {
        s.push_str(&format!(
            "{},{},{},{},{},{},{},{}\n",
            r.n,
            r.replicates,
            r.failures,
            r.coverage,
            r.se,
            r.mean_radius,
            r.mean_estimate,
            r.boundary_fraction
        ));
    }
    s
}

pub fn replicates_csv(rows: &[ReplicateRow]) -> String {
    let mut s =
        String::from("n,r,seed,covered,distance,radius,blown_radius,estimate,at_boundary\n");
    for r in rows {
        s.push_str(&format!(
            "{},{},{},{},{},{},{},{},{}\n",
            r.n,
            r.r,
            r.seed,
            csv_bool(r.covered),
            r.distance,
            r.radius,
            r.blown_radius,
            r.estimate,
            csv_bool(r.at_boundary)
        ));
    }
    s
}

pub fn compare_csv(report: &CompareReport) -> String {
    let mut s = String::from(
        "n,replicates,failures,coverage_eb,coverage_hb,difference,paired_se,mean_radius_eb,mean_radius_hb,median_center_distance,proximity\n",
    );
    for r in &report.rows {
        s.push_str(&format!(
            "{},{},{},{},{},{},{},{},{},{},{}\n",
            r.n,
            r.replicates,
            r.failures,
            r.coverage_eb,
            r.coverage_hb,
            r.difference,
            r.paired_se,
            r.mean_radius_eb,
            r.mean_radius_hb,
            r.median_center_distance,
            r.proximity
        ));
    }
    s
}

pub fn pairs_csv(rows: &[PairedRow]) -> String {
    let mut s = String::from(
        "n,r,seed,covered_eb,covered_hb,radius_eb,radius_hb,alpha_eb,alpha_hb,center_distance\n",
    );
    for p in rows {
        s.push_str(&format!(
            "{},{},{},{},{},{},{},{},{},{}\n",
            p.n,
            p.r,
            p.seed,
            csv_bool(p.covered_eb),
            csv_bool(p.covered_hb),
            p.radius_eb,
            p.radius_hb,
            p.alpha_eb,
            p.alpha_hb,
            p.center_distance
        ));
    }
    s
}

#[derive(Clone, Debug, PartialEq, Serialize, Deserialize)]
pub struct ManifestFile {
    pub name: String,
    pub sha256: String,
}

/// Run metadata. Timestamps live only here so result files stay reproducible.
#[derive(Clone, Debug, PartialEq, Serialize, Deserialize)]
pub struct Manifest {
    pub command: String,
    pub config_hash: String,
    pub library_version: String,
    pub master_seed: u64,
    pub started_unix: u64,
    pub finished_unix: u64,
    pub files: Vec<ManifestFile>,
}

pub fn unix_now() -> u64 {
    SystemTime::now()
        .duration_since(UNIX_EPOCH)
        .map(|d| d.as_secs())
        .unwrap_or(0)
}

/// Writes `files` (name, contents) into `dir` plus `manifest.json`.
pub fn write_results(
    dir: &Path,
    command: &str,
    config: &ExperimentConfig,
    started_unix: u64,
    files: &[(String, String)],
) -> Result<PathBuf> {
    fs::create_dir_all(dir).map_err(|e| Error::io(dir, e))?;
    let mut listed = Vec::new();
    for (name, text) in files {
        let path = dir.join(name);
        fs::write(&path, text).map_err(|e| Error::io(&path, e))?;
        listed.push(ManifestFile {
            name: name.clone(),
            sha256: hex::encode(Sha256::digest(text.as_bytes())),
        });
    }
    let manifest = Manifest {
        command: command.into(),
        config_hash: config.hash(),
        library_version: env!("CARGO_PKG_VERSION").into(),
        master_seed: config.master_seed,
        started_unix,
        finished_unix: unix_now(),
        files: listed,
    };
    let path = dir.join("manifest.json");
    fs::write(&path, serde_json::to_string_pretty(&manifest)?).map_err(|e| Error::io(&path, e))?;
    Ok(path)
}

pub fn coverage_files(report: &CoverageReport) -> Result<Vec<(String, String)>> {
    let m = report.method.as_str();
    Ok(vec![
        (format!("coverage_{m}.csv"), coverage_csv(report)),
        (
            format!("replicates_{m}.csv"),
            replicates_csv(&report.replicate_rows),
        ),
        (
            format!("report_{m}.json"),
            serde_json::to_string_pretty(report)? + "\n",
        ),
    ])
}

pub fn compare_files(report: &CompareReport) -> Result<Vec<(String, String)>> {
    Ok(vec![
        ("compare.csv".into(), compare_csv(report)),
        ("pairs.csv".into(), pairs_csv(&report.pairs)),
        (
            "compare.json".into(),
            serde_json::to_string_pretty(report)? + "\n",
        ),
    ])
}

#[cfg(test)]
mod tests {
    use super::*;

    fn small(method: BallMethod) -> ExperimentConfig {
        let truth = TruthSpec {
            family: TruthFamily::SelfSimilar,
            beta: 1.0,
            scale: 1.0,
            seed: 0,
        };
        let mut c = ExperimentConfig::new(method, truth, vec![100, 400]);
        c.replicates = 8;
        c.dim = Some(300);
        c.master_seed = 11;
        c
    }

    #[test]
    fn slope_of_exact_power_law() {
        let x = [1e3, 1e4, 1e5, 3e5];
        let y: Vec<f64> = x.iter().map(|n: &f64| 2.5 * n.powf(-0.37)).collect();
        let f = fit_slope(&x, &y).unwrap();
        assert!((f.slope + 0.37).abs() < 1e-10);
        assert!((f.r2 - 1.0).abs() < 1e-12);
        assert!(fit_slope(&[1.0], &[1.0]).is_none());
    }

    #[test]
    fn expected_slopes() {
        let e = |m, b, p, a| expected_slope(m, b, p, a).unwrap();
        assert!((e(BallMethod::EbAlpha, 1.0, 0.0, 1.0) + 1.0 / 3.0).abs() < 1e-15);
        assert!((e(BallMethod::EbTau, 2.0, 0.0, 1.0) + 3.0 / 8.0).abs() < 1e-15);
        assert!((e(BallMethod::EbAlpha, 1.0, 1.0, 1.0) + 0.2).abs() < 1e-15);
        assert!(expected_slope(BallMethod::EbTau, 2.0, 1.0, 1.0).is_err());
    }

    #[test]
    fn zero_truth_is_covered() {
        for method in [BallMethod::EbAlpha, BallMethod::EbTau, BallMethod::Hb] {
            let mut c = small(method);
            c.truth.scale = 1e-300;
            c.replicates = 1;
            c.n_list = vec![100];
            let rep = run_coverage(&c).unwrap();
            assert_eq!(rep.rows[0].coverage, 1.0, "{method}");
        }
    }

    #[test]
    fn reports_are_deterministic() {
        let c = small(BallMethod::EbAlpha);
        let a = run_coverage(&c).unwrap();
        let b = run_coverage(&c).unwrap();
        assert_eq!(coverage_files(&a).unwrap(), coverage_files(&b).unwrap());
        assert_eq!(a.rows.len(), 2);
        assert_eq!(a.replicate_rows.len(), 16);
    }

    #[test]
    fn summary_ignores_replicate_order() {
        let rep = run_coverage(&small(BallMethod::EbTau)).unwrap();
        let rows: Vec<ReplicateRow> = rep
            .replicate_rows
            .iter()
            .filter(|r| r.n == 100)
            .cloned()
            .collect();
        let mut rev = rows.clone();
        rev.reverse();
        assert_eq!(summarize(100, 8, &rows), summarize(100, 8, &rev));
    }

    #[test]
    fn failure_accounting() {
        let rep = run_coverage(&small(BallMethod::EbAlpha)).unwrap();
        let rows: Vec<ReplicateRow> = rep
            .replicate_rows
            .iter()
            .filter(|r| r.n == 400)
            .take(6)
            .cloned()
            .collect();
        let s = summarize(400, 8, &rows);
        assert_eq!(s.failures, 2);
        let covered = rows.iter().filter(|r| r.covered).count() as f64;
        assert_eq!(s.coverage, covered / 6.0);
        assert!(check_failures(400, 1, 200, None).is_ok());
        assert!(check_failures(400, 3, 200, None).is_err());
    }

    #[test]
    fn config_validation() {
        let mut c = small(BallMethod::Hb);
        c.n_list = vec![400, 100];
        assert!(matches!(c.validate(), Err(Error::Config(_))));
        let mut c = small(BallMethod::Hb);
        c.replicates = 0;
        assert!(c.validate().is_err());
        let mut c = small(BallMethod::Hb);
        c.schema_version = 2;
        assert!(c.validate().is_err());
    }

    #[test]
    fn toml_and_json_configs_agree() {
        let text = r#"
method = "hb"
n_list = [100, 1000]
replicates = 20
master_seed = 7

[truth]
family = "self_similar"
beta = 1.0

[spec]
gamma = 0.05
L = 2.0
"#;
        let c = ExperimentConfig::from_toml(text).unwrap();
        assert_eq!(c.method, BallMethod::Hb);
        assert_eq!(c.hb_grid, DEFAULT_HB_GRID);
        let back = ExperimentConfig::from_json(&serde_json::to_string(&c).unwrap()).unwrap();
        assert_eq!(back, c);
        assert_eq!(back.hash(), c.hash());
        assert!(ExperimentConfig::from_toml("method = \"hb\"\nbogus = 1").is_err());
    }

    #[test]
    fn paired_comparison_runs() {
        let mut c = small(BallMethod::EbAlpha);
        c.replicates = 4;
        let rep = compare_eb_hb(&c).unwrap();
        assert_eq!(rep.rows.len(), 2);
        assert_eq!(rep.pairs.len(), 8);
        for r in &rep.rows {
            assert!(r.paired_se >= 0.0 && r.proximity >= 0.0);
        }
    }
}
