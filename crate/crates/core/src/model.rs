//! The truncated Gaussian sequence model `X_i = κ_i θ_i + n^{-1/2} Z_i`,
//! `κ_i = i^{-p}`, `i = 1..=D`, plus truth families and the polished-tail test.

use std::fmt;
use std::str::FromStr;

use serde::{Deserialize, Serialize};

use crate::error::{Error, Result};
use crate::rng::Stream;

/// Smallest truncation dimension used by [`ModelConfig::new`].
pub const MIN_DEFAULT_DIM: usize = 10_000;

#[derive(Clone, Copy, Debug, PartialEq, Serialize, Deserialize)]
pub struct ModelConfig {
    /// Sample size; the noise level is `1/√n`.
    pub n: u64,
    /// Degree of ill-posedness.
    pub p: f64,
    /// Truncation dimension `D`.
    pub dim: usize,
}

impl ModelConfig {
    /// Config with the default truncation `D = max(2n, 10⁴)`.
    pub fn new(n: u64, p: f64) -> Result<Self> {
        let dim = (2 * n as usize).max(MIN_DEFAULT_DIM);
        Self::with_dim(n, p, dim)
    }

    pub fn with_dim(n: u64, p: f64, dim: usize) -> Result<Self> {
        let cfg = Self { n, p, dim };
        cfg.validate()?;
        Ok(cfg)
    }

    pub fn validate(&self) -> Result<()> {
        if self.n == 0 {
            return Err(Error::Config("n must be at least 1".into()));
        }
        if !(self.p >= 0.0 && self.p.is_finite()) {
            return Err(Error::Config(format!(
                "p must be finite and >= 0, got {}",
                self.p
            )));
        }
        if self.dim == 0 {
            return Err(Error::Config(
                "truncation dimension must be at least 1".into(),
            ));
        }
        Ok(())
    }

    /// `κ_i = i^{-p}` for the 1-based index `i`.
    #[inline]
    pub fn kappa(&self, i: usize) -> f64 {
        (i as f64).powf(-self.p)
    }

    pub fn kappas(&self) -> Vec<f64> {
        (1..=self.dim).map(|i| self.kappa(i)).collect()
    }

    /// Noise standard deviation `n^{-1/2}`.
    #[inline]
    pub fn noise_sd(&self) -> f64 {
        1.0 / (self.n as f64).sqrt()
    }
}

#[derive(Clone, Copy, Debug, PartialEq, Eq, Hash, Serialize, Deserialize)]
#[serde(rename_all = "snake_case")]
pub enum TruthFamily {
    SelfSimilar,
    BlockGap,
    SobolevRandom,
    Custom,
}

impl TruthFamily {
    pub fn as_str(&self) -> &'static str {
        match self {
            TruthFamily::SelfSimilar => "self_similar",
            TruthFamily::BlockGap => "block_gap",
            TruthFamily::SobolevRandom => "sobolev_random",
            TruthFamily::Custom => "custom",
        }
    }
}

impl fmt::Display for TruthFamily {
    fn fmt(&self, f: &mut fmt::Formatter<'_>) -> fmt::Result {
        f.write_str(self.as_str())
    }
}

impl FromStr for TruthFamily {
    type Err = Error;

    fn from_str(s: &str) -> Result<Self> {
        match s {
            "self_similar" => Ok(TruthFamily::SelfSimilar),
            "block_gap" => Ok(TruthFamily::BlockGap),
            "sobolev_random" => Ok(TruthFamily::SobolevRandom),
            "custom" => Ok(TruthFamily::Custom),
            other => Err(Error::Usage(format!("unknown truth family `{other}`"))),
        }
    }
}

/// A true coefficient sequence `θ₀` of length `D`.
#[derive(Clone, Debug, PartialEq, Serialize, Deserialize)]
pub struct Truth {
    pub theta: Vec<f64>,
    pub family: TruthFamily,
    /// Regularity tag.
    pub beta: f64,
    pub norm2: f64,
    /// Seed used by randomized families (0 otherwise).
    #[serde(default)]
    pub seed: u64,
}

impl Truth {
    pub fn custom(theta: Vec<f64>, beta: f64) -> Result<Self> {
        Self::assemble(theta, TruthFamily::Custom, beta, 0)
    }

    fn assemble(theta: Vec<f64>, family: TruthFamily, beta: f64, seed: u64) -> Result<Self> {
        if theta.iter().any(|t| !t.is_finite()) {
            return Err(Error::Numeric(
                "truth contains non-finite coefficients".into(),
            ));
        }
        let norm2 = l2_norm(&theta);
        Ok(Self {
            theta,
            family,
            beta,
            norm2,
            seed,
        })
    }

    pub fn dim(&self) -> usize {
        self.theta.len()
    }
}

/// Euclidean norm with scaling against overflow.
pub fn l2_norm(v: &[f64]) -> f64 {
    let scale = v.iter().fold(0.0f64, |m, x| m.max(x.abs()));
    if scale == 0.0 || !scale.is_finite() {
        return scale;
    }
    let s: f64 = v.iter().map(|x| (x / scale).powi(2)).sum();
    scale * s.sqrt()
}

/// Builds a truth of the requested family with `D = config.dim` coefficients.
///
/// * `self_similar`: `θ_i = scale·i^{-1/2-β}`.
/// * `block_gap`: the same decay kept only on the dyadic blocks
///   `[4^j, 2·4^j)`; the blocks `[2·4^j, 4^{j+1})` are zero.
/// * `sobolev_random`: `θ_i = scale·i^{-1/2-β}·u_i`, `u_i ~ U[-1, 1]` from `seed`.
pub fn make_truth(
    family: TruthFamily,
    beta: f64,
    scale: f64,
    config: &ModelConfig,
    seed: u64,
) -> Result<Truth> {
    config.validate()?;
    if !(beta >= 0.0 && beta.is_finite()) {
        return Err(Error::Usage(format!(
            "beta must be finite and >= 0, got {beta}"
        )));
    }
    if !(scale > 0.0 && scale.is_finite()) {
        return Err(Error::Usage(format!("scale must be positive, got {scale}")));
    }
    let decay = |i: usize| scale * (-(0.5 + beta) * (i as f64).ln()).exp();
    let d = config.dim;
    let theta: Vec<f64> = match family {
        TruthFamily::SelfSimilar => (1..=d).map(decay).collect(),
        TruthFamily::BlockGap => (1..=d)
            .map(|i| {
                if in_even_dyadic_block(i) {
                    decay(i)
                } else {
                    0.0
                }
            })
            .collect(),
        TruthFamily::SobolevRandom => {
            let mut rng = Stream::new(seed);
            (1..=d)
                .map(|i| decay(i) * (2.0 * rng.uniform() - 1.0))
                .collect()
        }
        TruthFamily::Custom => {
            return Err(Error::Usage(
                "custom truths are built with Truth::custom".into(),
            ))
        }
    };
    let seed = if family == TruthFamily::SobolevRandom {
        seed
    } else {
        0
    };
    Truth::assemble(theta, family, beta, seed)
}

/// `i ∈ [2^{2j}, 2^{2j+1})` for some `j ≥ 0`, i.e. `⌊log₂ i⌋` is even.
fn in_even_dyadic_block(i: usize) -> bool {
    let k = usize::BITS - 1 - i.leading_zeros();
    k.is_multiple_of(2)
}

#[derive(Clone, Copy, Debug, PartialEq, Serialize, Deserialize)]
pub struct PolishedTailParams {
    pub l0: f64,
    pub n0: usize,
    pub rho: f64,
}

impl Default for PolishedTailParams {
    fn default() -> Self {
        Self {
            l0: 3.0,
            n0: 2,
            rho: 2.0,
        }
    }
}

impl PolishedTailParams {
    pub fn new(l0: f64, n0: usize, rho: f64) -> Result<Self> {
        let p = Self { l0, n0, rho };
        p.validate()?;
        Ok(p)
    }

    pub fn validate(&self) -> Result<()> {
        if !(self.l0 >= 1.0) || !(self.rho > 1.0) || self.n0 < 1 {
            return Err(Error::Usage(format!(
                "polished tail parameters need L0 >= 1, rho > 1, N0 >= 1 (got {self:?})"
            )));
        }
        Ok(())
    }
}

#[derive(Clone, Copy, Debug, PartialEq, Eq)]
pub struct PolishedTailCheck {
    pub holds: bool,
    /// First `N` at which the block inequality fails.
    pub violating_n: Option<usize>,
    /// `ρ·N0 > D`: nothing to check.
    pub vacuous: bool,
}

/// Checks `Σ_{i=N}^{⌊ρN⌋} θ_i² ≥ L0⁻¹ Σ_{i=N}^{D} θ_i²` for every
/// `N0 ≤ N ≤ D/ρ`. A zero tail counts as satisfied.
pub fn is_polished_tail(truth: &Truth, params: &PolishedTailParams) -> PolishedTailCheck {
    let d = truth.dim();
    if params.rho * params.n0 as f64 > d as f64 {
        return PolishedTailCheck {
            holds: true,
            violating_n: None,
            vacuous: true,
        };
    }
    // tail[k] = Σ_{i ≥ k+1} θ_i² (0-based k), tail[d] = 0
    let mut tail = vec![0.0; d + 1];
    for k in (0..d).rev() {
        tail[k] = tail[k + 1] + truth.theta[k] * truth.theta[k];
    }
    let last = (d as f64 / params.rho).floor() as usize;
    for big_n in params.n0..=last {
        let total = tail[big_n - 1];
        if total == 0.0 {
            continue;
        }
        let upper = ((params.rho * big_n as f64).floor() as usize).min(d);
        let block = total - tail[upper];
        if block < total / params.l0 {
            return PolishedTailCheck {
                holds: false,
                violating_n: Some(big_n),
                vacuous: false,
            };
        }
    }
    PolishedTailCheck {
        holds: true,
        violating_n: None,
        vacuous: false,
    }
}

#[derive(Clone, Debug, PartialEq, Serialize, Deserialize)]
pub struct Observation {
    pub x: Vec<f64>,
    pub config: ModelConfig,
    pub seed: u64,
}

impl Observation {
    /// Wraps externally supplied data.
    pub fn from_data(x: Vec<f64>, config: ModelConfig, seed: u64) -> Result<Self> {
        config.validate()?;
        if x.len() != config.dim {
            return Err(Error::Config(format!(
                "observation has {} coordinates, config expects {}",
                x.len(),
                config.dim
            )));
        }
        if x.iter().any(|v| !v.is_finite()) {
            return Err(Error::Numeric(
                "observation contains non-finite values".into(),
            ));
        }
        Ok(Self { x, config, seed })
    }

    pub fn dim(&self) -> usize {
        self.x.len()
    }
}

/// Draws `x_i = i^{-p}θ_i + n^{-1/2} z_i` from the seeded stream.
pub fn simulate_observation(truth: &Truth, config: &ModelConfig, seed: u64) -> Result<Observation> {
    config.validate()?;
    if truth.dim() != config.dim {
        return Err(Error::Config(format!(
            "truth has {} coefficients, config dimension is {}",
            truth.dim(),
            config.dim
        )));
    }
    let mut z = vec![0.0; config.dim];
    Stream::new(seed).fill_normals(&mut z);
    let sd = config.noise_sd();
    let x = truth
        .theta
        .iter()
        .zip(&z)
        .enumerate()
        .map(|(k, (t, zi))| config.kappa(k + 1) * t + sd * zi)
        .collect();
    Ok(Observation {
        x,
        config: *config,
        seed,
    })
}

pub const SCHEMA_VERSION: u32 = 1;

/// Versioned JSON document for truths and (optionally) observations.
#[derive(Clone, Debug, PartialEq, Serialize, Deserialize)]
pub struct SequenceDoc {
    pub schema_version: u32,
    pub config: ModelConfig,
    pub family: TruthFamily,
    pub beta: f64,
    /// Observation seed when `x` is present, the truth seed otherwise.
    pub seed: u64,
    pub theta: Vec<f64>,
    #[serde(default, skip_serializing_if = "Option::is_none")]
    pub x: Option<Vec<f64>>,
}

impl SequenceDoc {
    pub fn from_truth(truth: &Truth, config: &ModelConfig) -> Self {
        Self {
            schema_version: SCHEMA_VERSION,
            config: *config,
            family: truth.family,
            beta: truth.beta,
            seed: truth.seed,
            theta: truth.theta.clone(),
            x: None,
        }
    }

    pub fn from_observation(truth: &Truth, obs: &Observation) -> Self {
        Self {
            seed: obs.seed,
            x: Some(obs.x.clone()),
            ..Self::from_truth(truth, &obs.config)
        }
    }

    pub fn to_json(&self) -> Result<String> {
        Ok(serde_json::to_string_pretty(self)?)
    }

    pub fn from_json(s: &str) -> Result<Self> {
        let doc: Self = serde_json::from_str(s)?;
        if doc.schema_version != SCHEMA_VERSION {
            return Err(Error::Serde(format!(
                "unsupported schema_version {} (expected {SCHEMA_VERSION})",
                doc.schema_version
            )));
        }
        doc.config.validate()?;
        if doc.theta.len() != doc.config.dim {
            return Err(Error::Config(
                "theta length does not match config.dim".into(),
            ));
        }
        Ok(doc)
    }

    pub fn truth(&self) -> Result<Truth> {
        let mut t = Truth::assemble(self.theta.clone(), self.family, self.beta, 0)?;
        if self.x.is_none() {
            t.seed = self.seed;
        }
        Ok(t)
    }

    pub fn observation(&self) -> Result<Option<Observation>> {
        self.x
            .clone()
            .map(|x| Observation::from_data(x, self.config, self.seed))
            .transpose()
    }
}
