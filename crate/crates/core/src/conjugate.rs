//! Exact coordinatewise Gaussian posterior under `θ_i ~ N(0, τ² i^{-1-2α})`.
//!
//! With `t_i = τ² i^{-1-2α}` and `r_i = n κ_i² t_i`:
//!
//! ```text
//! s_i² = t_i / (1 + r_i)
//! m_i  = n κ_i t_i x_i / (1 + r_i)
//! v_i  = κ_i² t_i + 1/n                      (marginal variance of x_i)
//! ℓ    = -½ Σ_i [ log(2π v_i) + x_i² / v_i ]
//! ```
//!
//! The log marginal likelihood is evaluated as `C − ½ Σ_i [log1p(r_i) − n x_i² r_i/(1+r_i)]`
//! with the data-only constant `C = −½ (D log(2π/n) + n Σ x_i²)` split off, so
//! differences between hyperparameter values keep full precision.

use serde::{Deserialize, Serialize};

use crate::error::{Error, Result};
use crate::model::{ModelConfig, Observation};

#[derive(Clone, Copy, Debug, PartialEq, Serialize, Deserialize)]
pub struct PriorParams {
    /// Regularity hyperparameter.
    pub alpha: f64,
    /// Scale hyperparameter.
    pub tau: f64,
}

impl PriorParams {
    pub fn new(alpha: f64, tau: f64) -> Result<Self> {
        let p = Self { alpha, tau };
        p.validate()?;
        Ok(p)
    }

    pub fn validate(&self) -> Result<()> {
        if !(self.alpha >= 0.0 && self.alpha.is_finite()) {
            return Err(Error::Usage(format!(
                "alpha must be finite and >= 0, got {}",
                self.alpha
            )));
        }
        if !(self.tau > 0.0 && self.tau.is_finite()) {
            return Err(Error::Usage(format!(
                "tau must be finite and > 0, got {}",
                self.tau
            )));
        }
        Ok(())
    }

    /// Prior variance `τ² i^{-1-2α}` computed as `τ² exp(−(1+2α) ln i)`.
    #[inline]
    pub fn prior_var(&self, i: usize) -> f64 {
        self.tau * self.tau * (-(1.0 + 2.0 * self.alpha) * (i as f64).ln()).exp()
    }
}

/// Upper bound on the prior mass dropped by truncating at `D`:
/// `Σ_{i>D} τ² i^{-1-2α} ≤ τ² D^{-2α} / (2α)`. `None` when `α = 0`.
pub fn truncation_bound(params: &PriorParams, dim: usize) -> Option<f64> {
    (params.alpha > 0.0).then(|| {
        params.tau * params.tau * (-2.0 * params.alpha * (dim as f64).ln()).exp()
            / (2.0 * params.alpha)
    })
}

#[derive(Clone, Debug, PartialEq, Serialize, Deserialize)]
pub struct ConjugatePosterior {
    pub mean: Vec<f64>,
    pub var: Vec<f64>,
    pub log_marginal: f64,
    pub params: PriorParams,
    pub config: ModelConfig,
}

impl ConjugatePosterior {
    pub fn dim(&self) -> usize {
        self.mean.len()
    }

    /// Posterior mean of `‖θ − m‖²`, i.e. `Σ s_i²`.
    pub fn total_var(&self) -> f64 {
        self.var.iter().sum()
    }
}

/// Neumaier-compensated accumulator.
#[derive(Clone, Copy, Debug, Default)]
pub(crate) struct Accum {
    sum: f64,
    comp: f64,
}

impl Accum {
    #[inline]
    pub(crate) fn add(&mut self, v: f64) {
        let t = self.sum + v;
        if self.sum.abs() >= v.abs() {
            self.comp += (self.sum - t) + v;
        } else {
            self.comp += (v - t) + self.sum;
        }
        self.sum = t;
    }

    #[inline]
    pub(crate) fn value(&self) -> f64 {
        self.sum + self.comp
    }
}

/// Log marginal likelihood evaluator for one observation.
///
/// Holds `ln i` and `n x_i²` so repeated evaluations over hyperparameters
/// only pay for one `exp`, one `log1p` and one division per coordinate.
#[derive(Clone, Debug)]
pub struct MarginalLikelihood {
    n: f64,
    p: f64,
    config: ModelConfig,
    x: Vec<f64>,
    kappa: Vec<f64>,
    ln_i: Vec<f64>,
    nx2: Vec<f64>,
    constant: f64,
}

impl MarginalLikelihood {
    pub fn new(obs: &Observation) -> Result<Self> {
        if obs.x.iter().any(|v| !v.is_finite()) {
            return Err(Error::Numeric(
                "observation contains non-finite values".into(),
            ));
        }
        let n = obs.config.n as f64;
        let d = obs.dim();
        let ln_i: Vec<f64> = (1..=d).map(|i| (i as f64).ln()).collect();
        let nx2: Vec<f64> = obs.x.iter().map(|x| n * x * x).collect();
        let mut data = Accum::default();
        for v in &nx2 {
            data.add(*v);
        }
        let constant = -0.5 * (d as f64 * (2.0 * std::f64::consts::PI / n).ln() + data.value());
        Ok(Self {
            n,
            p: obs.config.p,
            config: obs.config,
            x: obs.x.clone(),
            kappa: ln_i
                .iter()
                .map(|l| {
                    if obs.config.p == 0.0 {
                        1.0
                    } else {
                        (-obs.config.p * l).exp()
                    }
                })
                .collect(),
            ln_i,
            nx2,
            constant,
        })
    }

    pub fn dim(&self) -> usize {
        self.ln_i.len()
    }

    /// Hyperparameter-free part of the log marginal likelihood.
    pub fn constant(&self) -> f64 {
        self.constant
    }

    #[inline]
    fn variable_part(&self, r: impl Fn(usize) -> f64) -> f64 {
        variable_sum(r, &self.nx2)
    }

    /// As `variable_part` over the first `m` coordinates only.
    fn variable_sum_prefix(&self, m: usize, r: impl Fn(usize) -> f64) -> f64 {
        variable_sum(r, &self.nx2[..m])
    }

    /// Posterior moments at `(α, τ)` paired with a log marginal already
    /// evaluated elsewhere (e.g. by [`Self::profile_alpha`]).
    pub fn posterior(&self, params: PriorParams, log_marginal: f64) -> Result<ConjugatePosterior> {
        params.validate()?;
        let prior = self.prior_variances(params);
        Ok(self.posterior_from_prior(params, &prior, log_marginal))
    }

    /// Posteriors at `(α_j, τ)` for the grid points with `keep[j]`, in grid
    /// order. On uniform grids the prior variances of neighbouring kept
    /// points are related by the factor `i^{-2h}`, re-anchored every 16 steps.
    pub fn posteriors_on_grid(
        &self,
        alphas: &[f64],
        tau: f64,
        log_marginals: &[f64],
        keep: &[bool],
    ) -> Result<Vec<ConjugatePosterior>> {
        const REANCHOR: usize = 16;
        let uniform = alphas.len() >= 3 && is_uniform(alphas);
        let step: Vec<f64> = if uniform {
            let h = alphas[1] - alphas[0];
            self.ln_i.iter().map(|l| (-2.0 * h * l).exp()).collect()
        } else {
            Vec::new()
        };
        let mut out = Vec::new();
        let mut state: Option<(usize, Vec<f64>)> = None;
        for (j, &a) in alphas.iter().enumerate() {
            if !keep[j] {
                continue;
            }
            let params = PriorParams::new(a, tau)?;
            let prior = match state.take() {
                Some((c, mut t)) if uniform && c / REANCHOR == j / REANCHOR => {
                    for _ in c..j {
                        for (ti, f) in t.iter_mut().zip(&step) {
                            *ti *= f;
                        }
                    }
                    t
                }
                _ => self.prior_variances(params),
            };
            out.push(self.posterior_from_prior(params, &prior, log_marginals[j]));
            state = Some((j, prior));
        }
        Ok(out)
    }

    fn prior_variances(&self, params: PriorParams) -> Vec<f64> {
        let tau2 = params.tau * params.tau;
        let e_prior = 1.0 + 2.0 * params.alpha;
        self.ln_i
            .iter()
            .map(|l| tau2 * (-e_prior * l).exp())
            .collect()
    }

    fn posterior_from_prior(
        &self,
        params: PriorParams,
        prior: &[f64],
        log_marginal: f64,
    ) -> ConjugatePosterior {
        let d = self.dim();
        let mut mean = Vec::with_capacity(d);
        let mut var = Vec::with_capacity(d);
        for ((&t, &x), &kappa) in prior.iter().zip(&self.x).zip(&self.kappa) {
            let shrink = 1.0 / (1.0 + self.n * t * kappa * kappa);
            var.push(t * shrink);
            mean.push(self.n * kappa * t * x * shrink);
        }
        ConjugatePosterior {
            mean,
            var,
            log_marginal,
            params,
            config: self.config,
        }
    }

    /// Full log marginal likelihood at `(α, τ)`.
    pub fn eval(&self, alpha: f64, tau: f64) -> f64 {
        self.constant - 0.5 * self.variable(alpha, tau)
    }

    fn variable(&self, alpha: f64, tau: f64) -> f64 {
        let e = 1.0 + 2.0 * alpha + 2.0 * self.p;
        let scale = self.n * tau * tau;
        self.variable_part(|i| scale * (-e * self.ln_i[i]).exp())
    }

    /// Evaluates on an increasing α grid. Uniform grids reuse `r_i` through
    /// the factor `i^{-2h}`, re-anchored every 16 steps.
    pub fn profile_alpha(&self, alphas: &[f64], tau: f64) -> Vec<f64> {
        const REANCHOR: usize = 16;
        if alphas.len() < 3 || !is_uniform(alphas) {
            return alphas.iter().map(|&a| self.eval(a, tau)).collect();
        }
        let h = alphas[1] - alphas[0];
        let step: Vec<f64> = self.ln_i.iter().map(|l| (-2.0 * h * l).exp()).collect();
        let scale = self.n * tau * tau;
        let mut r = vec![0.0; self.dim()];
        let mut out = Vec::with_capacity(alphas.len());
        for (j, &a) in alphas.iter().enumerate() {
            if j % REANCHOR == 0 {
                let e = 1.0 + 2.0 * a + 2.0 * self.p;
                for (ri, l) in r.iter_mut().zip(&self.ln_i) {
                    *ri = scale * (-e * l).exp();
                }
            } else {
                for (ri, f) in r.iter_mut().zip(&step) {
                    *ri *= f;
                }
            }
            out.push(self.constant - 0.5 * self.variable_part(|i| r[i]));
        }
        out
    }

    /// Evaluator over `τ` at fixed `α`.
    pub fn at_alpha(&self, alpha: f64) -> TauLikelihood<'_> {
        let e = 1.0 + 2.0 * alpha + 2.0 * self.p;
        TauLikelihood::new(
            self,
            self.ln_i.iter().map(|l| self.n * (-e * l).exp()).collect(),
        )
    }
}

/// `τ ↦ ℓ(α, τ)` for fixed `α`, with `s_i = n κ_i² i^{-1-2α}` precomputed.
///
/// `r_i = τ² s_i` decreases in `i`, so the coordinates in the series regime
/// of [`coordinate_term`] form a suffix; their total is
/// `Σ_k (−1)^{k+1} τ^{2k} Σ_{i≥m} s_i^k (1/k − y_i)` from stored suffix sums.
pub struct TauLikelihood<'a> {
    base: &'a MarginalLikelihood,
    shape: Vec<f64>,
    /// `suffix[m][k-1] = Σ_{i≥m} s_i^k (1/k − y_i)`
    suffix: Vec<[f64; SERIES_TERMS]>,
}

impl<'a> TauLikelihood<'a> {
    fn new(base: &'a MarginalLikelihood, shape: Vec<f64>) -> Self {
        let mut suffix = vec![[0.0; SERIES_TERMS]; shape.len() + 1];
        let mut acc = [Accum::default(); SERIES_TERMS];
        for i in (0..shape.len()).rev() {
            let (s, y) = (shape[i], base.nx2[i]);
            let mut pw = s;
            for (k, a) in acc.iter_mut().enumerate() {
                a.add(pw * (1.0 / (k + 1) as f64 - y));
                pw *= s;
            }
            suffix[i] = acc.map(|a| a.value());
        }
        Self {
            base,
            shape,
            suffix,
        }
    }

    pub fn eval(&self, tau: f64) -> f64 {
        let t2 = tau * tau;
        let m = self.shape.partition_point(|s| s * t2 >= SERIES_BELOW);
        let exact = self.base.variable_sum_prefix(m, |i| self.shape[i] * t2);
        let mut series = 0.0;
        let mut pw = t2;
        let mut sign = 1.0;
        for v in &self.suffix[m] {
            series += sign * pw * v;
            pw *= t2;
            sign = -sign;
        }
        self.base.constant - 0.5 * (exact + series)
    }
}

const SERIES_BELOW: f64 = 1e-3;
const SERIES_TERMS: usize = 6;

/// `Σ_i [log1p(r_i) − n x_i² r_i/(1+r_i)]` over `i < nx2.len()`.
///
/// Blocks of `BLOCK` terms are summed with four partial sums and the block
/// sums compensated; the relative error stays near `BLOCK·ε`.
fn variable_sum(r: impl Fn(usize) -> f64, nx2: &[f64]) -> f64 {
    const BLOCK: usize = 64;
    let mut acc = Accum::default();
    let mut terms = [0.0; BLOCK];
    for (b, ys) in nx2.chunks(BLOCK).enumerate() {
        let terms = &mut terms[..ys.len()];
        let mut small = true;
        for (j, t) in terms.iter_mut().enumerate() {
            *t = r(b * BLOCK + j);
            small &= *t < SERIES_BELOW;
        }
        if small {
            for (t, y) in terms.iter_mut().zip(ys) {
                *t = series_term(*t, *y);
            }
        } else {
            for (t, y) in terms.iter_mut().zip(ys) {
                *t = coordinate_term(*t, *y);
            }
        }
        let mut part = [0.0; 4];
        let quads = terms.chunks_exact(4);
        for (k, t) in quads.remainder().iter().enumerate() {
            part[k] += t;
        }
        for q in quads {
            for k in 0..4 {
                part[k] += q[k];
            }
        }
        acc.add((part[0] + part[1]) + (part[2] + part[3]));
    }
    acc.value()
}

/// `log1p(r) − y·r/(1+r) = Σ_k (−1)^{k+1} r^k (1/k − y)`, truncated after `r⁶`.
#[inline]
fn series_term(r: f64, y: f64) -> f64 {
    let c = |k: f64| 1.0 / k - y;
    r * (c(1.0) - r * (c(2.0) - r * (c(3.0) - r * (c(4.0) - r * (c(5.0) - r * c(6.0))))))
}

/// `log1p(r) − y·r/(1+r)`; below `r = 10⁻³` by its power series in `r`
/// (truncation error under `r⁷`).
#[inline]
fn coordinate_term(r: f64, y: f64) -> f64 {
    if r < SERIES_BELOW {
        series_term(r, y)
    } else {
        r.ln_1p() - y * r / (1.0 + r)
    }
}

fn is_uniform(grid: &[f64]) -> bool {
    let h = grid[1] - grid[0];
    h > 0.0
        && grid
            .windows(2)
            .all(|w| ((w[1] - w[0]) - h).abs() <= 1e-12 * h.abs().max(w[1].abs()))
}

/// Conjugate posterior and log marginal likelihood for fixed `(α, τ)`.
pub fn fit_posterior(obs: &Observation, params: PriorParams) -> Result<ConjugatePosterior> {
    params.validate()?;
    obs.config.validate()?;
    if obs.x.iter().any(|v| !v.is_finite()) {
        return Err(Error::Numeric(
            "observation contains non-finite values".into(),
        ));
    }
    let cfg = obs.config;
    let n = cfg.n as f64;
    let d = obs.dim();
    let tau2 = params.tau * params.tau;
    let mut mean = Vec::with_capacity(d);
    let mut var = Vec::with_capacity(d);
    let mut data = Accum::default();
    let mut rs = Vec::with_capacity(d);
    let mut nx2s = Vec::with_capacity(d);
    let e_prior = 1.0 + 2.0 * params.alpha;
    // r exactly as MarginalLikelihood computes it, so both agree bit for bit
    let e_r = e_prior + 2.0 * cfg.p;
    let scale = n * tau2;
    for (k, &x) in obs.x.iter().enumerate() {
        let ln_i = ((k + 1) as f64).ln();
        let t = tau2 * (-e_prior * ln_i).exp();
        let kappa = if cfg.p == 0.0 {
            1.0
        } else {
            (-cfg.p * ln_i).exp()
        };
        let r = scale * (-e_r * ln_i).exp();
        let shrink = 1.0 / (1.0 + n * t * kappa * kappa);
        var.push(t * shrink);
        mean.push(n * kappa * t * x * shrink);
        let nx2 = n * x * x;
        data.add(nx2);
        rs.push(r);
        nx2s.push(nx2);
    }
    let constant = -0.5 * (d as f64 * (2.0 * std::f64::consts::PI / n).ln() + data.value());
    let log_marginal = constant - 0.5 * variable_sum(|i| rs[i], &nx2s);
    if !log_marginal.is_finite() {
        return Err(Error::Numeric(format!(
            "log marginal likelihood is not finite at {params:?}"
        )));
    }
    if let Some(bound) = truncation_bound(&params, d) {
        log::debug!("prior mass beyond D={d}: <= {bound:e}");
    }
    Ok(ConjugatePosterior {
        mean,
        var,
        log_marginal,
        params,
        config: cfg,
    })
}

/// `ℓ(α_j, τ)` on a strictly increasing grid without building posteriors.
pub fn log_marginal_profile(obs: &Observation, alphas: &[f64], tau: f64) -> Result<Vec<f64>> {
    if alphas.is_empty() {
        return Err(Error::Usage("alpha grid is empty".into()));
    }
    if alphas.windows(2).any(|w| !(w[1] > w[0])) {
        return Err(Error::Usage(
            "alpha grid must be strictly increasing".into(),
        ));
    }
    for &a in alphas {
        PriorParams::new(a, tau)?;
    }
    Ok(MarginalLikelihood::new(obs)?.profile_alpha(alphas, tau))
}

#[cfg(test)]
mod tests {
    use super::*;
    use crate::model::{make_truth, simulate_observation, TruthFamily};

    fn obs_with(x: Vec<f64>, n: u64, p: f64) -> Observation {
        let d = x.len();
        Observation::from_data(x, ModelConfig::with_dim(n, p, d).unwrap(), 0).unwrap()
    }

    /// Direct transcription of the closed form, no reformulation.
    fn naive_log_marginal(obs: &Observation, a: f64, tau: f64) -> f64 {
        let n = obs.config.n as f64;
        let mut s = 0.0;
        for (k, x) in obs.x.iter().enumerate() {
            let i = (k + 1) as f64;
            let t = tau * tau * i.powf(-1.0 - 2.0 * a);
            let kap = i.powf(-obs.config.p);
            let v = kap * kap * t + 1.0 / n;
            s += (2.0 * std::f64::consts::PI * v).ln() + x * x / v;
        }
        -0.5 * s
    }

    #[test]
    fn zero_data() {
        let obs = obs_with(vec![0.0; 50], 100, 0.5);
        let post = fit_posterior(&obs, PriorParams::new(1.0, 1.0).unwrap()).unwrap();
        assert!(post.mean.iter().all(|m| *m == 0.0));
        let direct = naive_log_marginal(&obs, 1.0, 1.0);
        assert!((post.log_marginal - direct).abs() < 1e-10 * direct.abs());
    }

    #[test]
    fn hand_evaluated_first_coordinate() {
        let obs = obs_with(vec![1.0], 100, 0.0);
        let post = fit_posterior(&obs, PriorParams::new(1.0, 1.0).unwrap()).unwrap();
        assert!((post.mean[0] - 100.0 / 101.0).abs() < 1e-14);
        assert!((post.var[0] - 1.0 / 101.0).abs() < 1e-16);
    }

    #[test]
    fn matches_naive_formula() {
        let cfg = ModelConfig::with_dim(500, 1.0, 300).unwrap();
        let truth = make_truth(TruthFamily::SelfSimilar, 1.0, 1.0, &cfg, 0).unwrap();
        let obs = simulate_observation(&truth, &cfg, 11).unwrap();
        for (a, tau) in [(0.0, 1.0), (0.7, 2.0), (3.0, 0.3)] {
            let post = fit_posterior(&obs, PriorParams::new(a, tau).unwrap()).unwrap();
            let direct = naive_log_marginal(&obs, a, tau);
            assert!((post.log_marginal - direct).abs() < 1e-10 * direct.abs());
        }
    }

    #[test]
    fn larger_alpha_shrinks_more() {
        let obs = obs_with(vec![0.3; 20], 100, 0.0);
        let lo = fit_posterior(&obs, PriorParams::new(0.5, 1.0).unwrap()).unwrap();
        let hi = fit_posterior(&obs, PriorParams::new(0.6, 1.0).unwrap()).unwrap();
        for i in 1..20 {
            assert!(hi.var[i] < lo.var[i]);
            assert!(hi.mean[i] < lo.mean[i]);
        }
    }

    #[test]
    fn variance_bounds() {
        let cfg = ModelConfig::with_dim(1000, 1.0, 2000).unwrap();
        let truth = make_truth(TruthFamily::SelfSimilar, 0.5, 1.0, &cfg, 0).unwrap();
        let obs = simulate_observation(&truth, &cfg, 1).unwrap();
        let params = PriorParams::new(0.8, 1.3).unwrap();
        let post = fit_posterior(&obs, params).unwrap();
        let n = cfg.n as f64;
        for (k, s2) in post.var.iter().enumerate() {
            let t = params.prior_var(k + 1);
            let kap = cfg.kappa(k + 1);
            assert!(*s2 > 0.0);
            assert!(*s2 <= t.min(1.0 / (n * kap * kap)) * (1.0 + 1e-12));
        }
        // more data never inflates the posterior variance
        let bigger =
            Observation::from_data(obs.x.clone(), ModelConfig { n: 4000, ..cfg }, 0).unwrap();
        let post2 = fit_posterior(&bigger, params).unwrap();
        assert!(post2.var.iter().zip(&post.var).all(|(a, b)| a <= b));
    }

    #[test]
    fn profile_single_point_is_exact() {
        let cfg = ModelConfig::with_dim(200, 0.0, 400).unwrap();
        let truth = make_truth(TruthFamily::SelfSimilar, 1.0, 1.0, &cfg, 0).unwrap();
        let obs = simulate_observation(&truth, &cfg, 0).unwrap();
        let prof = log_marginal_profile(&obs, &[0.9], 1.0).unwrap();
        let post = fit_posterior(&obs, PriorParams::new(0.9, 1.0).unwrap()).unwrap();
        assert_eq!(prof[0], post.log_marginal);
    }

    #[test]
    fn profile_zero_data_increasing() {
        let obs = obs_with(vec![0.0; 1000], 100, 0.0);
        let grid: Vec<f64> = (0..40).map(|j| j as f64 * 0.1).collect();
        let prof = log_marginal_profile(&obs, &grid, 1.0).unwrap();
        assert!(prof.windows(2).all(|w| w[1] > w[0]));
    }

    #[test]
    fn profile_rejects_bad_grids() {
        let obs = obs_with(vec![0.0; 3], 10, 0.0);
        assert!(log_marginal_profile(&obs, &[], 1.0).is_err());
        assert!(log_marginal_profile(&obs, &[0.5, 0.5], 1.0).is_err());
        assert!(log_marginal_profile(&obs, &[-0.5, 0.5], 1.0).is_err());
    }

    #[test]
    fn profile_matches_independent_fits() {
        let cfg = ModelConfig::new(1000, 0.0).unwrap();
        let truth = make_truth(TruthFamily::SelfSimilar, 1.0, 1.0, &cfg, 0).unwrap();
        let obs = simulate_observation(&truth, &cfg, 0).unwrap();
        let grid: Vec<f64> = (0..50).map(|j| 0.05 * j as f64).collect();
        let prof = log_marginal_profile(&obs, &grid, 1.0).unwrap();
        for (a, v) in grid.iter().zip(&prof) {
            let f = fit_posterior(&obs, PriorParams::new(*a, 1.0).unwrap()).unwrap();
            assert!(
                (v - f.log_marginal).abs() <= 1e-12 * f.log_marginal.abs(),
                "{a}"
            );
        }
    }

    #[test]
    fn tau_evaluator_agrees() {
        let cfg = ModelConfig::with_dim(300, 0.5, 600).unwrap();
        let truth = make_truth(TruthFamily::SelfSimilar, 1.0, 1.0, &cfg, 0).unwrap();
        let obs = simulate_observation(&truth, &cfg, 4).unwrap();
        let ml = MarginalLikelihood::new(&obs).unwrap();
        for alpha in [0.0, 1.0] {
            let at = ml.at_alpha(alpha);
            // from every coordinate in the series regime to none
            for tau in [1e-4, 0.01, 0.1, 1.0, 7.0, 300.0] {
                let f = fit_posterior(&obs, PriorParams::new(alpha, tau).unwrap()).unwrap();
                assert!((at.eval(tau) - f.log_marginal).abs() <= 1e-12 * f.log_marginal.abs());
            }
        }
    }

    #[test]
    fn truncation_bound_is_an_upper_bound() {
        let params = PriorParams::new(0.5, 1.0).unwrap();
        let d = 100;
        let tail: f64 = (d + 1..2_000_000).map(|i| params.prior_var(i)).sum();
        assert!(tail <= truncation_bound(&params, d).unwrap());
        assert!(truncation_bound(&PriorParams::new(0.0, 1.0).unwrap(), d).is_none());
    }
}
