//! Hyperparameter adaptation.
//!
//! * [`eb_alpha`]: marginal maximum likelihood for the regularity `α ∈ [0, A]`.
//! * [`eb_tau`]: marginal maximum likelihood for the scale `τ` at fixed `α`.
//! * [`hb_posterior`]: the mixture posterior under a hyperprior `λ` on `(0, A]`,
//!   integrated with a midpoint rule.
//!
//! Both optimizers scan a coarse grid, then refine around the best grid point
//! by golden-section search. The refined point is only accepted if it improves
//! on the grid; exact ties go to the smaller hyperparameter.

use serde::{Deserialize, Serialize};

use crate::conjugate::{ConjugatePosterior, MarginalLikelihood, PriorParams};
use crate::error::{Error, Result};
use crate::golden;
use crate::model::Observation;

/// Coarse-grid spacing for `α`.
pub const ALPHA_GRID_STEP: f64 = 0.01;
/// Coarse-grid spacing for `log τ`.
pub const LOG_TAU_GRID_STEP: f64 = 0.05;
/// Mixture components whose weight falls below this are not materialized.
pub const COMPONENT_WEIGHT_FLOOR: f64 = 1e-15;

/// Growing upper bound `A_n = √(log n) / (4 √max(log ρ, 1))`.
pub fn default_alpha_bound(n: u64, rho: f64) -> f64 {
    let log_n = (n.max(2) as f64).ln();
    log_n.sqrt() / (4.0 * rho.ln().max(1.0).sqrt())
}

/// Default search interval `[n^{-1/2}, n^{1/2}]` for `τ`.
pub fn default_tau_bounds(n: u64) -> (f64, f64) {
    let s = (n as f64).sqrt();
    (1.0 / s, s)
}

/// Hyperprior density on the regularity:
/// `λ(α) = c4 α^{-c3} e^{-c2 α}` for `α > c1`, `λ(α) = c5` on `(0, c1]`,
/// supported on `(0, A]`.
#[derive(Clone, Copy, Debug, PartialEq, Serialize, Deserialize)]
pub struct HyperPrior {
    pub c1: f64,
    pub c2: f64,
    pub c3: f64,
    pub c4: f64,
    pub c5: f64,
    /// Upper end `A` of the support.
    pub a_max: f64,
}

impl HyperPrior {
    pub fn new(c1: f64, c2: f64, c3: f64, c4: f64, c5: f64, a_max: f64) -> Result<Self> {
        let h = Self {
            c1,
            c2,
            c3,
            c4,
            c5,
            a_max,
        };
        h.validate()?;
        Ok(h)
    }

    /// `c1 = 1, c2 = 1, c3 = 0`, `c4` normalizing on `(0, A]`, `c5 = λ(1⁺)`.
    pub fn default_for(a_max: f64) -> Result<Self> {
        if !(a_max > 0.0 && a_max.is_finite()) {
            return Err(Error::Usage(format!("A must be positive, got {a_max}")));
        }
        let e_inv = (-1.0f64).exp();
        // ∫₀^A λ = c5·min(A, 1) + c4 ∫₁^A e^{-α} dα, with c5 = c4/e
        let mass_per_c4 = if a_max <= 1.0 {
            a_max * e_inv
        } else {
            e_inv + (e_inv - (-a_max).exp())
        };
        let c4 = 1.0 / mass_per_c4;
        Self::new(1.0, 1.0, 0.0, c4, c4 * e_inv, a_max)
    }

    pub fn validate(&self) -> Result<()> {
        let finite = [self.c1, self.c2, self.c3, self.c4, self.c5, self.a_max]
            .iter()
            .all(|v| v.is_finite());
        if !finite {
            return Err(Error::Usage("hyperprior constants must be finite".into()));
        }
        if self.c1 < 0.0 || self.c2 < 0.0 {
            return Err(Error::Usage("hyperprior needs c1 >= 0 and c2 >= 0".into()));
        }
        if self.c4 <= 0.0 || self.c5 <= 0.0 {
            return Err(Error::Usage("hyperprior needs c4 > 0 and c5 > 0".into()));
        }
        if self.c2 == 0.0 && self.c3 <= 1.0 {
            return Err(Error::Usage("hyperprior needs c3 > 1 when c2 = 0".into()));
        }
        if self.a_max <= 0.0 {
            return Err(Error::Usage(
                "hyperprior support bound A must be positive".into(),
            ));
        }
        Ok(())
    }

    pub fn log_density(&self, alpha: f64) -> f64 {
        if alpha <= 0.0 || alpha > self.a_max {
            f64::NEG_INFINITY
        } else if alpha <= self.c1 {
            self.c5.ln()
        } else {
            self.c4.ln() - self.c3 * alpha.ln() - self.c2 * alpha
        }
    }

    pub fn density(&self, alpha: f64) -> f64 {
        self.log_density(alpha).exp()
    }
}

/// Outcome of a one-dimensional marginal likelihood maximization.
#[derive(Clone, Debug, PartialEq, Serialize, Deserialize)]
pub struct EbResult {
    /// `α̂` or `τ̂`.
    pub estimate: f64,
    /// Maximized log marginal likelihood.
    pub objective: f64,
    pub at_boundary: bool,
    /// `(hyperparameter, log marginal)` for every evaluation, grid first.
    #[serde(skip)]
    pub trace: Vec<(f64, f64)>,
}

/// Grid scan plus golden refinement over `[lo, hi]` in the search coordinate `s`.
/// `eval_grid` evaluates the whole grid; `eval` a single point.
fn grid_then_golden(
    lo: f64,
    hi: f64,
    step: f64,
    tol: f64,
    eval_grid: impl FnOnce(&[f64]) -> Vec<f64>,
    mut eval: impl FnMut(f64) -> f64,
) -> (f64, f64, Vec<(f64, f64)>) {
    let k = (((hi - lo) / step).ceil() as usize).max(1);
    let grid: Vec<f64> = (0..=k)
        .map(|j| {
            if j == k {
                hi
            } else {
                lo + (hi - lo) * j as f64 / k as f64
            }
        })
        .collect();
    let values = eval_grid(&grid);
    let mut best = 0;
    for (j, v) in values.iter().enumerate() {
        if *v > values[best] {
            best = j;
        }
    }
    let mut trace: Vec<(f64, f64)> = grid.iter().copied().zip(values.iter().copied()).collect();
    let (mut s_best, mut f_best) = (grid[best], values[best]);
    let a = grid[best.saturating_sub(1)];
    let b = grid[(best + 1).min(k)];
    if b > a {
        let r = golden::maximize(
            |s| {
                let v = eval(s);
                trace.push((s, v));
                v
            },
            a,
            b,
            tol,
        );
        if r.value > f_best || (r.value == f_best && r.x < s_best) {
            s_best = r.x;
            f_best = r.value;
        }
    }
    (s_best, f_best, trace)
}

/// Empirical Bayes `α̂ = argmax_{α ∈ [0, A]} ℓ(α, τ = 1)`.
pub fn eb_alpha(obs: &Observation, a_max: f64, tol: f64) -> Result<EbResult> {
    if !(a_max > 0.0 && a_max.is_finite()) || !(tol > 0.0) {
        return Err(Error::Usage(format!(
            "eb_alpha needs A > 0 and tol > 0 (A={a_max}, tol={tol})"
        )));
    }
    let ml = MarginalLikelihood::new(obs)?;
    let (alpha, objective, trace) = grid_then_golden(
        0.0,
        a_max,
        ALPHA_GRID_STEP,
        tol,
        |g| ml.profile_alpha(g, 1.0),
        |a| ml.eval(a, 1.0),
    );
    if !objective.is_finite() {
        return Err(Error::Numeric(
            "non-finite marginal likelihood in eb_alpha".into(),
        ));
    }
    Ok(EbResult {
        estimate: alpha,
        objective,
        at_boundary: alpha <= tol || alpha >= a_max - tol,
        trace,
    })
}

/// Empirical Bayes `τ̂` over `[low, high]` at fixed `α`, searched in `log τ`.
/// `tol` applies to `log τ`.
pub fn eb_tau(obs: &Observation, alpha: f64, bounds: (f64, f64), tol: f64) -> Result<EbResult> {
    let (low, high) = bounds;
    if !(low > 0.0 && high > low && high.is_finite()) || !(tol > 0.0) {
        return Err(Error::Usage(format!(
            "eb_tau needs 0 < low < high and tol > 0 (got {bounds:?})"
        )));
    }
    PriorParams::new(alpha, 1.0)?;
    let ml = MarginalLikelihood::new(obs)?;
    let at = ml.at_alpha(alpha);
    let (s_lo, s_hi) = (low.ln(), high.ln());
    let (s, objective, trace) = grid_then_golden(
        s_lo,
        s_hi,
        LOG_TAU_GRID_STEP,
        tol,
        |g| g.iter().map(|s| at.eval(s.exp())).collect(),
        |s| at.eval(s.exp()),
    );
    if !objective.is_finite() {
        return Err(Error::Numeric(
            "non-finite marginal likelihood in eb_tau".into(),
        ));
    }
    let estimate = if s == s_lo {
        low
    } else if s == s_hi {
        high
    } else {
        s.exp()
    };
    Ok(EbResult {
        estimate,
        objective,
        at_boundary: s <= s_lo + tol || s >= s_hi - tol,
        trace: trace.into_iter().map(|(s, v)| (s.exp(), v)).collect(),
    })
}

#[derive(Clone, Debug, PartialEq)]
pub struct MixtureComponent {
    pub grid_index: usize,
    pub weight: f64,
    pub posterior: ConjugatePosterior,
}

/// Hierarchical Bayes posterior on a grid of `α` values.
#[derive(Clone, Debug, PartialEq)]
pub struct HbPosterior {
    pub grid: Vec<f64>,
    /// Posterior probabilities of the grid points; sum to one.
    pub weights: Vec<f64>,
    pub log_marginals: Vec<f64>,
    /// Components with weight at least [`COMPONENT_WEIGHT_FLOOR`].
    pub components: Vec<MixtureComponent>,
    /// Mixture posterior mean `θ̂_n`.
    pub mean: Vec<f64>,
}

impl HbPosterior {
    pub fn dim(&self) -> usize {
        self.mean.len()
    }

    /// Posterior mean of `α`.
    pub fn mean_alpha(&self) -> f64 {
        self.grid
            .iter()
            .zip(&self.weights)
            .map(|(a, w)| a * w)
            .sum()
    }

    /// Mass within `±radius` of `alpha`.
    pub fn mass_near(&self, alpha: f64, radius: f64) -> f64 {
        self.grid
            .iter()
            .zip(&self.weights)
            .filter(|(a, _)| (**a - alpha).abs() <= radius)
            .map(|(_, w)| w)
            .sum()
    }

    pub fn summary(&self) -> HbSummary {
        HbSummary {
            grid: self.grid.clone(),
            weights: self.weights.clone(),
            mean_alpha: self.mean_alpha(),
            active_components: self.components.len(),
        }
    }
}

/// JSON-friendly view of an [`HbPosterior`] without the component arrays.
#[derive(Clone, Debug, PartialEq, Serialize, Deserialize)]
pub struct HbSummary {
    pub grid: Vec<f64>,
    pub weights: Vec<f64>,
    pub mean_alpha: f64,
    pub active_components: usize,
}

/// Normalizes `log_weights` by log-sum-exp. Errors when nothing survives.
pub fn normalize_log_weights(log_weights: &[f64]) -> Result<Vec<f64>> {
    let max = log_weights
        .iter()
        .copied()
        .fold(f64::NEG_INFINITY, f64::max);
    if !max.is_finite() {
        return Err(Error::Numeric(format!(
            "all mixture weights underflow (max log-weight {max})"
        )));
    }
    let raw: Vec<f64> = log_weights.iter().map(|l| (l - max).exp()).collect();
    let total: f64 = raw.iter().sum();
    Ok(raw.into_iter().map(|w| w / total).collect())
}

/// HB posterior on the midpoint grid `α_j = (j + ½)A/G`, `j < G`.
pub fn hb_posterior(
    obs: &Observation,
    hyper: &HyperPrior,
    grid_size: usize,
) -> Result<HbPosterior> {
    if grid_size < 16 {
        return Err(Error::Usage(format!(
            "grid_size must be at least 16, got {grid_size}"
        )));
    }
    let width = hyper.a_max / grid_size as f64;
    let grid: Vec<f64> = (0..grid_size).map(|j| (j as f64 + 0.5) * width).collect();
    hb_posterior_on_grid(obs, hyper, &grid, &vec![width; grid_size])
}

/// HB posterior on an arbitrary increasing grid with cell widths `widths`:
/// `w_j ∝ λ(α_j) exp(ℓ(α_j)) Δ_j`.
pub fn hb_posterior_on_grid(
    obs: &Observation,
    hyper: &HyperPrior,
    grid: &[f64],
    widths: &[f64],
) -> Result<HbPosterior> {
    hyper.validate()?;
    if grid.is_empty() || grid.len() != widths.len() {
        return Err(Error::Usage(
            "grid and widths must be non-empty and of equal length".into(),
        ));
    }
    if grid.windows(2).any(|w| !(w[1] > w[0])) || widths.iter().any(|w| !(*w > 0.0)) {
        return Err(Error::Usage(
            "grid must be strictly increasing with positive widths".into(),
        ));
    }
    let ml = MarginalLikelihood::new(obs)?;
    let log_marginals = ml.profile_alpha(grid, 1.0);
    let log_w: Vec<f64> = grid
        .iter()
        .zip(&log_marginals)
        .zip(widths)
        .map(|((a, l), w)| hyper.log_density(*a) + l + w.ln())
        .collect();
    let weights = normalize_log_weights(&log_w)?;
    let keep: Vec<bool> = weights
        .iter()
        .map(|w| *w >= COMPONENT_WEIGHT_FLOOR)
        .collect();
    let posteriors = ml.posteriors_on_grid(grid, 1.0, &log_marginals, &keep)?;
    let mut mean = vec![0.0; obs.dim()];
    let mut components = Vec::with_capacity(posteriors.len());
    let kept = (0..grid.len()).filter(|&j| keep[j]);
    for (j, posterior) in kept.zip(posteriors) {
        let w = weights[j];
        for (m, c) in mean.iter_mut().zip(&posterior.mean) {
            *m += w * c;
        }
        components.push(MixtureComponent {
            grid_index: j,
            weight: w,
            posterior,
        });
    }
    Ok(HbPosterior {
        grid: grid.to_vec(),
        weights,
        log_marginals,
        components,
        mean,
    })
}
