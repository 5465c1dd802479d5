//! Credible balls `{θ: ‖θ − θ̂‖₂ ≤ L·r̂}` where `r̂` is the `(1−γ)`-quantile of
//! the posterior distance to the posterior mean.

use std::fmt;
use std::str::FromStr;

use serde::{Deserialize, Serialize};
use sha2::{Digest, Sha256};

use crate::adapt::HbPosterior;
use crate::conjugate::ConjugatePosterior;
use crate::error::{Error, Result};
use crate::quadform::{mixture_quantile_by, weighted_chisq_quantile, QuadTerm};
use crate::rng::Stream;

/// Relative tolerance on the squared radius for deterministic inversion.
pub const RADIUS_REL_TOL: f64 = 1e-8;
pub const DEFAULT_MC_COUNT: usize = 200_000;
pub const MIN_MIXTURE_MC_COUNT: usize = 10_000;
/// Centers longer than this are replaced by a content hash in JSON.
pub const CENTER_INLINE_LIMIT: usize = 64;

#[derive(Clone, Copy, Debug, PartialEq, Serialize, Deserialize)]
pub struct CredibleSpec {
    pub gamma: f64,
    #[serde(rename = "L")]
    pub blowup: f64,
}

impl CredibleSpec {
    pub fn new(gamma: f64, blowup: f64) -> Result<Self> {
        let s = Self { gamma, blowup };
        s.validate()?;
        Ok(s)
    }

    pub fn validate(&self) -> Result<()> {
        if !(self.gamma > 0.0 && self.gamma < 1.0) {
            return Err(Error::Config(format!(
                "gamma must be in (0,1), got {}",
                self.gamma
            )));
        }
        if !(self.blowup > 0.0 && self.blowup.is_finite()) {
            return Err(Error::Config(format!(
                "L must be positive, got {}",
                self.blowup
            )));
        }
        Ok(())
    }
}

impl Default for CredibleSpec {
    fn default() -> Self {
        Self {
            gamma: 0.05,
            blowup: 2.0,
        }
    }
}

/// Slowly varying blow-up `(3ρ^{3(1+2p)})^{A}`.
pub fn slowly_varying_blowup(rho: f64, p: f64, a_max: f64) -> f64 {
    (3.0 * rho.powf(3.0 * (1.0 + 2.0 * p))).powf(a_max)
}

#[derive(Clone, Copy, Debug, PartialEq, Eq, Hash, Serialize, Deserialize)]
#[serde(rename_all = "snake_case")]
pub enum BallMethod {
    EbAlpha,
    EbTau,
    Hb,
}

impl BallMethod {
    pub fn as_str(&self) -> &'static str {
        match self {
            BallMethod::EbAlpha => "eb_alpha",
            BallMethod::EbTau => "eb_tau",
            BallMethod::Hb => "hb",
        }
    }
}

impl fmt::Display for BallMethod {
    fn fmt(&self, f: &mut fmt::Formatter<'_>) -> fmt::Result {
        f.write_str(self.as_str())
    }
}

impl FromStr for BallMethod {
    type Err = Error;

    fn from_str(s: &str) -> Result<Self> {
        match s {
            "eb_alpha" => Ok(BallMethod::EbAlpha),
            "eb_tau" => Ok(BallMethod::EbTau),
            "hb" => Ok(BallMethod::Hb),
            other => Err(Error::Usage(format!(
                "unknown method '{other}' (expected eb_alpha, eb_tau or hb)"
            ))),
        }
    }
}

#[derive(Clone, Copy, Debug, PartialEq, Eq, Default, Serialize, Deserialize)]
#[serde(rename_all = "snake_case")]
pub enum RadiusMethod {
    #[default]
    Imhof,
    Mc,
}

impl FromStr for RadiusMethod {
    type Err = Error;

    fn from_str(s: &str) -> Result<Self> {
        match s {
            "imhof" => Ok(RadiusMethod::Imhof),
            "mc" => Ok(RadiusMethod::Mc),
            other => Err(Error::Usage(format!(
                "unknown radius method '{other}' (expected imhof or mc)"
            ))),
        }
    }
}

#[derive(Clone, Debug, PartialEq, Serialize, Deserialize)]
pub struct RadiusEstimate {
    pub radius: f64,
    /// Monte Carlo standard error; zero for deterministic inversion.
    pub se: f64,
    pub method: RadiusMethod,
    /// Set when inversion failed and the estimate came from simulation.
    #[serde(skip_serializing_if = "Option::is_none")]
    pub warning: Option<String>,
}

fn check_gamma(gamma: f64) -> Result<()> {
    if gamma > 0.0 && gamma < 1.0 {
        Ok(())
    } else {
        Err(Error::Usage(format!("gamma must be in (0,1), got {gamma}")))
    }
}

/// Empirical `(1−γ)`-quantile of the distances `d` (sorted in place) with a
/// standard error from the order statistics at `mp ± √(mp(1−p))`.
pub fn empirical_quantile(d: &mut [f64], level: f64) -> (f64, f64) {
    d.sort_unstable_by(|a, b| a.total_cmp(b));
    let m = d.len() as f64;
    let last = d.len() - 1;
    let idx = |k: f64| (k.ceil() as usize).saturating_sub(1).min(last);
    let mp = m * level;
    let half = (mp * (1.0 - level)).sqrt();
    let q = d[idx(mp)];
    let se = 0.5 * (d[idx(mp + half)] - d[idx((mp - half).max(1.0))]);
    (q, se)
}

fn mc_fixed(post: &ConjugatePosterior, level: f64, count: usize, seed: u64) -> (f64, f64) {
    let sd: Vec<f64> = post.var.iter().map(|v| v.sqrt()).collect();
    let mut z = vec![0.0; sd.len()];
    let mut rng = Stream::new(seed);
    let mut dist: Vec<f64> = (0..count)
        .map(|_| {
            rng.fill_normals(&mut z);
            z.iter()
                .zip(&sd)
                .map(|(z, s)| (s * z) * (s * z))
                .sum::<f64>()
                .sqrt()
        })
        .collect();
    empirical_quantile(&mut dist, level)
}

/// Radius of the fixed-hyperparameter ball: `√q` with `q` the `(1−γ)`-quantile
/// of `Σ s_i² W_i`.
pub fn radius_fixed(
    post: &ConjugatePosterior,
    gamma: f64,
    method: RadiusMethod,
    mc_count: usize,
    seed: u64,
) -> Result<RadiusEstimate> {
    check_gamma(gamma)?;
    let level = 1.0 - gamma;
    if method == RadiusMethod::Imhof {
        match weighted_chisq_quantile(&post.var, level, RADIUS_REL_TOL) {
            Ok(q) => {
                return Ok(RadiusEstimate {
                    radius: q.sqrt(),
                    se: 0.0,
                    method,
                    warning: None,
                });
            }
            Err(Error::Numeric(msg)) => {
                log::warn!("Imhof inversion failed ({msg}); falling back to Monte Carlo");
                let (radius, se) = mc_fixed(post, level, mc_count.max(1), seed);
                return Ok(RadiusEstimate {
                    radius,
                    se,
                    method: RadiusMethod::Mc,
                    warning: Some(format!("Imhof inversion failed: {msg}")),
                });
            }
            Err(e) => return Err(e),
        }
    }
    if mc_count == 0 {
        return Err(Error::Usage("mc_count must be positive".into()));
    }
    let (radius, se) = mc_fixed(post, level, mc_count, seed);
    Ok(RadiusEstimate {
        radius,
        se,
        method,
        warning: None,
    })
}

/// Radius of the mixture ball by simulation: empirical `(1−γ)`-quantile of
/// `‖θ − θ̂‖₂` over mixture draws.
pub fn radius_mixture(
    post: &HbPosterior,
    gamma: f64,
    mc_count: usize,
    seed: u64,
) -> Result<RadiusEstimate> {
    check_gamma(gamma)?;
    if mc_count < MIN_MIXTURE_MC_COUNT {
        return Err(Error::Usage(format!(
            "mixture radius needs mc_count >= {MIN_MIXTURE_MC_COUNT}, got {mc_count}"
        )));
    }
    let cumulative: Vec<f64> = post
        .components
        .iter()
        .scan(0.0, |acc, c| {
            *acc += c.weight;
            Some(*acc)
        })
        .collect();
    let shapes: Vec<(Vec<f64>, Vec<f64>)> = post
        .components
        .iter()
        .map(|c| {
            let sd = c.posterior.var.iter().map(|v| v.sqrt()).collect();
            let shift = c
                .posterior
                .mean
                .iter()
                .zip(&post.mean)
                .map(|(m, c)| m - c)
                .collect();
            (sd, shift)
        })
        .collect();
    let mut z = vec![0.0; post.mean.len()];
    let mut rng = Stream::new(seed);
    let mut dist: Vec<f64> = (0..mc_count)
        .map(|_| {
            let j = rng.categorical(&cumulative);
            rng.fill_normals(&mut z);
            let (sd, shift) = &shapes[j];
            z.iter()
                .zip(sd)
                .zip(shift)
                .map(|((z, s), d)| {
                    let e = s * z + d;
                    e * e
                })
                .sum::<f64>()
                .sqrt()
        })
        .collect();
    let (radius, se) = empirical_quantile(&mut dist, 1.0 - gamma);
    Ok(RadiusEstimate {
        radius,
        se,
        method: RadiusMethod::Mc,
        warning: None,
    })
}

/// Mixture radius by deterministic inversion. Given component `j`,
/// `‖θ − θ̂‖² = Σ_i (s_{ji} Z_i + m_{ji} − θ̂_i)²`, a noncentral weighted sum.
pub fn radius_mixture_imhof(post: &HbPosterior, gamma: f64) -> Result<RadiusEstimate> {
    check_gamma(gamma)?;
    let weights: Vec<f64> = post.components.iter().map(|c| c.weight).collect();
    let terms = |j: usize| -> Vec<QuadTerm> {
        let c = &post.components[j].posterior;
        c.var
            .iter()
            .zip(&c.mean)
            .zip(&post.mean)
            .map(|((v, m), center)| QuadTerm {
                weight: *v,
                shift2: (m - center) * (m - center),
            })
            .collect()
    };
    let q = mixture_quantile_by(&weights, terms, 1.0 - gamma, RADIUS_REL_TOL)?;
    Ok(RadiusEstimate {
        radius: q.sqrt(),
        se: 0.0,
        method: RadiusMethod::Imhof,
        warning: None,
    })
}

#[derive(Clone, Debug, PartialEq)]
pub struct CredibleBall {
    pub center: Vec<f64>,
    pub radius: f64,
    pub blown_radius: f64,
    pub spec: CredibleSpec,
    pub method: BallMethod,
    pub radius_se: f64,
}

pub fn build_ball(
    center: Vec<f64>,
    radius: &RadiusEstimate,
    spec: CredibleSpec,
    method: BallMethod,
) -> Result<CredibleBall> {
    spec.validate()?;
    if !(radius.radius > 0.0 && radius.radius.is_finite()) {
        return Err(Error::Numeric(format!(
            "radius must be positive, got {}",
            radius.radius
        )));
    }
    Ok(CredibleBall {
        center,
        radius: radius.radius,
        blown_radius: spec.blowup * radius.radius,
        spec,
        method,
        radius_se: radius.se,
    })
}

impl CredibleBall {
    pub fn distance(&self, theta: &[f64]) -> Result<f64> {
        if theta.len() != self.center.len() {
            return Err(Error::Usage(format!(
                "theta has length {} but the ball lives in dimension {}",
                theta.len(),
                self.center.len()
            )));
        }
        let d2: f64 = theta
            .iter()
            .zip(&self.center)
            .map(|(t, c)| (t - c) * (t - c))
            .sum();
        Ok(d2.sqrt())
    }

    /// `‖θ − center‖₂ ≤ L·r̂`, boundary included.
    pub fn contains(&self, theta: &[f64]) -> Result<bool> {
        Ok(self.distance(theta)? <= self.blown_radius)
    }

    pub fn to_json(&self) -> Result<String> {
        Ok(serde_json::to_string_pretty(&BallJson::from(self))?)
    }
}

pub fn contains(ball: &CredibleBall, theta: &[f64]) -> Result<bool> {
    ball.contains(theta)
}

/// SHA-256 of the little-endian bytes of `v`, hex encoded.
pub fn content_hash(v: &[f64]) -> String {
    let mut h = Sha256::new();
    for x in v {
        h.update(x.to_le_bytes());
    }
    hex::encode(h.finalize())
}

#[derive(Serialize, Deserialize)]
struct BallJson {
    dim: usize,
    #[serde(skip_serializing_if = "Option::is_none")]
    center: Option<Vec<f64>>,
    #[serde(skip_serializing_if = "Option::is_none")]
    center_sha256: Option<String>,
    radius: f64,
    blown_radius: f64,
    spec: CredibleSpec,
    method: BallMethod,
    radius_se: f64,
}

impl From<&CredibleBall> for BallJson {
    fn from(b: &CredibleBall) -> Self {
        let inline = b.center.len() <= CENTER_INLINE_LIMIT;
        Self {
            dim: b.center.len(),
            center: inline.then(|| b.center.clone()),
            center_sha256: (!inline).then(|| content_hash(&b.center)),
            radius: b.radius,
            blown_radius: b.blown_radius,
            spec: b.spec,
            method: b.method,
            radius_se: b.radius_se,
        }
    }
}
