//! Distribution of `Q = Σ_i (√λ_i Z_i + δ_i)²` by characteristic-function
//! inversion (Imhof), and of finite mixtures of such sums.
//!
//! ```text
//! P(Q > x) = ½ + (1/π) ∫₀^∞ sin φ(u) / (u ρ(u)) du
//! φ(u)     = ½ Σ [atan(λ_i u) + b_i u/(1+λ_i²u²)] − ½ x u,      b_i = δ_i²
//! ln ρ(u)  = Σ [¼ ln(1+λ_i²u²) + ½ b_i λ_i u²/(1+λ_i²u²)]
//! ```
//!
//! The integral is a midpoint sum with step `Δ = 2π/Ω`, where `Ω` exceeds the
//! bisection range plus a far upper quantile of `Q`; the aliasing error of the
//! rule is then bounded by `P(Q > Ω)`. The range is cut at `U`, and the
//! omitted nodes are summed in closed form as a geometric series in the local
//! amplitude decay and phase step. This keeps `U` moderate when only a few
//! weights dominate and the integrand decays slowly.
//!
//! Terms with `λ_i U ≤ 0.1` enter through power sums of `λ_i` (series in
//! `λ_i u`), so the per-node cost only scales with the number of large weights.
//! Everything except the `−½xu` phase is computed once per distribution, so
//! each CDF evaluation during quantile bisection is a single pass over the nodes.

use crate::error::{Error, Result};

/// Series order for small terms; with `λu ≤ 0.1` the first omitted power is `0.1^{2K+1}`.
const SERIES_ORDER: usize = 6;
const SMALL_TERM: f64 = 0.1;
/// Stop once `u·g(u) ≤ ENVELOPE_TOL`, `g = 1/(uρ)`.
const ENVELOPE_TOL: f64 = 1e-12;
/// Or once the estimated remainder after the tail correction is below this.
const CORRECTION_TOL: f64 = 1e-11;
const MAX_NODES: usize = 4_000_000;
/// Mixture components lighter than this fraction of the total are skipped.
pub const MIXTURE_WEIGHT_FLOOR: f64 = 1e-12;

/// One summand `(√λ Z + δ)²`; `shift2 = δ²`.
#[derive(Clone, Copy, Debug, PartialEq)]
pub struct QuadTerm {
    pub weight: f64,
    pub shift2: f64,
}

impl QuadTerm {
    pub fn central(weight: f64) -> Self {
        Self {
            weight,
            shift2: 0.0,
        }
    }
}

#[derive(Clone, Copy, Debug, Default)]
struct Moments {
    mean: f64,
    var: f64,
    max_weight: f64,
}

fn moments(terms: &[QuadTerm]) -> Moments {
    let mut m = Moments::default();
    for t in terms {
        m.mean += t.weight + t.shift2;
        m.var += 2.0 * t.weight * t.weight + 4.0 * t.weight * t.shift2;
        m.max_weight = m.max_weight.max(t.weight);
    }
    m
}

/// Local quantities of the integrand at one `u`.
#[derive(Clone, Copy, Debug, Default)]
struct Local {
    /// `φ(u) + ½xu`
    phase: f64,
    ln_rho: f64,
    /// `2 d/du (φ + ½xu)`
    s1: f64,
    /// `d s1 / du`
    ds1: f64,
    /// `d ln ρ / du`
    dln_rho: f64,
}

fn add_exact(loc: &mut Local, t: &QuadTerm, u: f64) {
    let (l, b) = (t.weight, t.shift2);
    let z = l * u;
    let q = 1.0 + z * z;
    loc.phase += 0.5 * (z.atan() + b * u / q);
    loc.ln_rho += 0.25 * (z * z).ln_1p() + 0.5 * b * l * u * u / q;
    loc.s1 += l / q + b * (1.0 - z * z) / (q * q);
    loc.ds1 += -2.0 * l * l * z / (q * q) + 2.0 * b * l * z * (z * z - 3.0) / (q * q * q);
    loc.dln_rho += 0.5 * l * z / q + b * z / (q * q);
}

const SUMS: usize = 2 * SERIES_ORDER + 3;
const BANDS: usize = 64;

/// Power sums `Σ z^k` and `Σ b z^k` with `z = λ/scale`, `k < SUMS`.
#[derive(Clone, Copy, Debug)]
struct Series<'a> {
    scale: f64,
    p: &'a [f64; SUMS],
    b: &'a [f64; SUMS],
}

impl Series<'_> {
    /// Adds the phase and log-amplitude contributions at `u` (every term
    /// with `λu ≤ 0.1`).
    fn add_to(&self, loc: &mut Local, u: f64) {
        let w = self.scale * u;
        let w2 = w * w;
        let mut phase = 0.0;
        let mut ln_rho = 0.0;
        let mut we = 1.0; // w^{2k}
        let mut sign = 1.0;
        for k in 0..=SERIES_ORDER {
            let (even, odd) = (2 * k, 2 * k + 1);
            let wo = we * w;
            // ½ atan z = ½ Σ (−1)^k z^{2k+1}/(2k+1);  ½ b u/(1+z²) = ½ u Σ (−1)^k b z^{2k}
            phase += 0.5 * sign * (wo * self.p[odd] / odd as f64 + u * we * self.b[even]);
            // ¼ ln(1+z²) = ¼ Σ_{k≥1} (−1)^{k+1} z^{2k}/k;  ½ bλu²/(1+z²) = ½ u Σ (−1)^k b z^{2k+1}
            if k >= 1 {
                ln_rho -= 0.25 * sign * we * self.p[even] / k as f64;
            }
            ln_rho += 0.5 * u * sign * wo * self.b[odd];
            we *= w2;
            sign = -sign;
        }
        loc.phase += phase;
        loc.ln_rho += ln_rho;
    }

    /// As [`Self::add_to`], plus the derivatives needed by the tail terms.
    fn add_full(&self, loc: &mut Local, u: f64) {
        self.add_to(loc, u);
        let (c, w) = (self.scale, self.scale * u);
        let w2 = w * w;
        let mut we = 1.0;
        let mut sign = 1.0;
        for k in 0..=SERIES_ORDER {
            let (even, odd) = (2 * k, 2 * k + 1);
            let wo = we * w;
            let a = c * self.p[odd] + odd as f64 * self.b[even];
            loc.s1 += sign * we * a;
            if k >= 1 {
                loc.ds1 += sign * (2 * k) as f64 * (we / w) * c * a;
            }
            loc.dln_rho += sign * wo * (0.5 * c * self.p[even + 2] + (k + 1) as f64 * self.b[odd]);
            we *= w2;
            sign = -sign;
        }
    }
}

/// Terms grouped into dyadic weight bands `λ ∈ (λ_max 2^{-j-1}, λ_max 2^{-j}]`
/// (the last band also holds everything smaller), with suffix power sums over
/// the bands. At any `u` the bands with `λ_max 2^{-j} u ≤ 0.1` enter through
/// the series and only the bands above are summed term by term.
#[derive(Clone, Debug)]
struct TermIndex {
    scale: f64,
    terms: Vec<QuadTerm>,
    starts: Vec<usize>,
    p: Vec<[f64; SUMS]>,
    b: Vec<[f64; SUMS]>,
}

/// `Σ z^k` and `Σ b z^k`, `z = λ/scale`, for `k < SUMS`; four terms at a time.
fn power_sums(terms: &[QuadTerm], scale: f64) -> ([f64; SUMS], [f64; SUMS]) {
    const LANES: usize = 4;
    let (mut p, mut b) = ([0.0; SUMS], [0.0; SUMS]);
    let chunks = terms.chunks_exact(LANES);
    let rest = chunks.remainder();
    for c in chunks {
        let z: [f64; LANES] = std::array::from_fn(|l| c[l].weight / scale);
        let s: [f64; LANES] = std::array::from_fn(|l| c[l].shift2);
        let mut pw = [1.0; LANES];
        for k in 0..SUMS {
            p[k] += (pw[0] + pw[1]) + (pw[2] + pw[3]);
            b[k] += (s[0] * pw[0] + s[1] * pw[1]) + (s[2] * pw[2] + s[3] * pw[3]);
            for l in 0..LANES {
                pw[l] *= z[l];
            }
        }
    }
    for t in rest {
        let z = t.weight / scale;
        let mut pw = 1.0;
        for k in 0..SUMS {
            p[k] += pw;
            b[k] += t.shift2 * pw;
            pw *= z;
        }
    }
    (p, b)
}

impl TermIndex {
    fn new(terms: &[QuadTerm], scale: f64) -> Self {
        let band = |t: &QuadTerm| {
            // floor(log2(scale/λ)) read off the exponent bits
            let ratio = scale / t.weight;
            if ratio.is_finite() {
                let e = ((ratio.to_bits() >> 52) & 0x7ff) as usize;
                e.saturating_sub(1023).min(BANDS - 1)
            } else {
                BANDS - 1
            }
        };
        let bands: Vec<usize> = terms.iter().map(band).collect();
        let mut starts = vec![0usize; BANDS + 1];
        for &j in &bands {
            starts[j + 1] += 1;
        }
        for j in 0..BANDS {
            starts[j + 1] += starts[j];
        }
        let mut fill = starts.clone();
        let mut grouped = vec![QuadTerm::central(0.0); terms.len()];
        for (t, &j) in terms.iter().zip(&bands) {
            grouped[fill[j]] = *t;
            fill[j] += 1;
        }
        let mut p = vec![[0.0; SUMS]; BANDS + 1];
        let mut b = vec![[0.0; SUMS]; BANDS + 1];
        for j in 0..BANDS {
            (p[j], b[j]) = power_sums(&grouped[starts[j]..starts[j + 1]], scale);
        }
        for j in (0..BANDS).rev() {
            for k in 0..SUMS {
                p[j][k] += p[j + 1][k];
                b[j][k] += b[j + 1][k];
            }
        }
        Self {
            scale,
            terms: grouped,
            starts,
            p,
            b,
        }
    }

    /// First band handled by the series at `u`.
    fn split(&self, u: f64) -> usize {
        let x = self.scale * u / SMALL_TERM;
        if x <= 1.0 {
            0
        } else {
            (x.log2().ceil() as usize).min(BANDS)
        }
    }

    fn exact(&self, split: usize) -> &[QuadTerm] {
        &self.terms[..self.starts[split]]
    }

    fn series(&self, split: usize) -> Series<'_> {
        Series {
            scale: self.scale,
            p: &self.p[split],
            b: &self.b[split],
        }
    }

    /// All local quantities at `u`.
    fn local(&self, u: f64) -> Local {
        let j = self.split(u);
        let mut loc = Local::default();
        for t in self.exact(j) {
            add_exact(&mut loc, t, u);
        }
        self.series(j).add_full(&mut loc, u);
        loc
    }
}

/// Precomputed inversion data for one distribution.
#[derive(Clone, Debug)]
pub struct ImhofKernel {
    nodes: Vec<f64>,
    phase: Vec<f64>,
    /// `Δ / (π u ρ(u))`
    amp: Vec<f64>,
    step: f64,
    /// First omitted node, `U + Δ/2`.
    next: f64,
    tail: Local,
    mean: f64,
    sd: f64,
    max_weight: f64,
}

impl ImhofKernel {
    /// Builds the kernel for evaluations with `x ∈ [x_lo, x_hi]`.
    pub fn new(terms: &[QuadTerm], x_lo: f64, x_hi: f64) -> Result<Self> {
        if terms.is_empty() {
            return Err(Error::Usage(
                "weighted chi-square needs at least one term".into(),
            ));
        }
        let nonnegative = terms
            .iter()
            .fold(true, |ok, t| ok & (t.weight >= 0.0) & (t.shift2 >= 0.0));
        let mom = moments(terms);
        // A finite sum of nonnegative terms has finite summands.
        if !(nonnegative && mom.mean.is_finite() && mom.var.is_finite()) {
            return Err(Error::Numeric(
                "weights and shifts must be finite and nonnegative".into(),
            ));
        }
        if !(mom.max_weight > 0.0) {
            return Err(Error::Numeric(
                "all weights are zero; the distribution is degenerate".into(),
            ));
        }
        let sd = mom.var.sqrt();
        let omega = x_hi + mom.mean + 20.0 * sd + 60.0 * mom.max_weight;
        let step = 2.0 * std::f64::consts::PI / omega;
        let x_ref = x_lo.max(f64::MIN_POSITIVE);

        let index = TermIndex::new(terms, mom.max_weight);
        let cut = find_cut(&index, x_ref)?;
        let count = (cut / step).ceil() as usize;
        if count > MAX_NODES {
            return Err(Error::Numeric(format!(
                "Imhof quadrature needs {count} nodes (limit {MAX_NODES})"
            )));
        }
        let cut = count as f64 * step;

        let mut nodes = Vec::with_capacity(count);
        let mut phase = Vec::with_capacity(count);
        let mut amp = Vec::with_capacity(count);
        for j in 0..count {
            let u = (j as f64 + 0.5) * step;
            let split = index.split(u);
            let mut loc = Local::default();
            for t in index.exact(split) {
                add_exact(&mut loc, t, u);
            }
            index.series(split).add_to(&mut loc, u);
            nodes.push(u);
            phase.push(loc.phase);
            amp.push(step / (std::f64::consts::PI * u) * (-loc.ln_rho).exp());
        }
        let next = cut + 0.5 * step;
        let tail = index.local(next);
        Ok(Self {
            nodes,
            phase,
            amp,
            step,
            next,
            tail,
            mean: mom.mean,
            sd,
            max_weight: mom.max_weight,
        })
    }

    pub fn node_count(&self) -> usize {
        self.nodes.len()
    }

    pub fn mean(&self) -> f64 {
        self.mean
    }

    pub fn sd(&self) -> f64 {
        self.sd
    }

    pub fn max_weight(&self) -> f64 {
        self.max_weight
    }

    /// `P(Q ≤ x)`.
    pub fn cdf(&self, x: f64) -> f64 {
        if x <= 0.0 {
            return 0.0;
        }
        let half_x = 0.5 * x;
        let mut body = 0.0;
        for ((u, ph), a) in self.nodes.iter().zip(&self.phase).zip(&self.amp) {
            body += a * (ph - half_x * u).sin();
        }
        let tail = tail_sum(&self.tail, self.next, self.step, x).unwrap_or(0.0);
        // rounding can push far-tail values just outside [0, 1]
        (0.5 - body - tail / std::f64::consts::PI).clamp(0.0, 1.0)
    }
}

#[cfg(test)]
fn local_exact(terms: &[QuadTerm], u: f64) -> Local {
    let mut loc = Local::default();
    for t in terms {
        add_exact(&mut loc, t, u);
    }
    loc
}

/// The omitted nodes `Σ_{j≥0} Δ g(u_j) sin φ(u_j)`, `u_j = u + jΔ`, with
/// `g` geometric and `φ` linear from `u` on:
/// `Δ g Im[e^{iφ} / (1 − r e^{iδ})]`, `r = e^{Δ (ln g)'}`, `δ = Δ φ'`.
///
/// The sum, not the integral `∫_U^∞`, is what the midpoint rule leaves out;
/// the two differ by a factor near `δ / (2 sin(δ/2))` when the phase moves
/// a sizable fraction of `π` per node.
/// `None` when `φ'(u)` is not safely negative.
fn tail_sum(loc: &Local, u: f64, step: f64, x: f64) -> Option<f64> {
    let dphi = 0.5 * (loc.s1 - x);
    if !(dphi < -0.05 * x) {
        return None;
    }
    let g = (-u.ln() - loc.ln_rho).exp();
    if g == 0.0 {
        return Some(0.0);
    }
    let dln_g = -1.0 / u - loc.dln_rho;
    let r = (dln_g * step).exp();
    let (sd, cd) = (dphi * step).sin_cos();
    let phi = loc.phase - 0.5 * x * u;
    let (sp, cp) = phi.sin_cos();
    let (re, im) = (1.0 - r * cd, r * sd);
    Some(step * g * (sp * re + cp * im) / (re * re + im * im))
}

/// Size of the first neglected correction term.
fn tail_remainder(loc: &Local, cut: f64, x: f64) -> Option<f64> {
    let dphi = 0.5 * (loc.s1 - x);
    if !(dphi < -0.05 * x) {
        return None;
    }
    let g = (-cut.ln() - loc.ln_rho).exp();
    let dln_g = -1.0 / cut - loc.dln_rho;
    let dln_h = dln_g - 0.5 * loc.ds1 / dphi;
    Some(2.0 * (g / dphi).abs() * (dln_h / dphi).powi(2))
}

/// Smallest `U` on a doubling ladder from `1/(4λ_max)` where either the
/// envelope is negligible or the corrected remainder is.
fn find_cut(index: &TermIndex, x_ref: f64) -> Result<f64> {
    let mut u = 0.25 / index.scale;
    for _ in 0..200 {
        let loc = index.local(u);
        if (-loc.ln_rho).exp() <= ENVELOPE_TOL {
            return Ok(u);
        }
        if u * index.scale >= 4.0 {
            if let Some(rem) = tail_remainder(&loc, u, x_ref) {
                if rem <= CORRECTION_TOL {
                    return Ok(u);
                }
            }
        }
        u *= 2.0;
    }
    Err(Error::Numeric(
        "could not bound the Imhof integration range".into(),
    ))
}

/// Finite mixture `Σ_c w_c · Law(Q_c)` with shared bisection range.
#[derive(Clone, Debug)]
pub struct MixtureCdf {
    weights: Vec<f64>,
    kernels: Vec<ImhofKernel>,
}

impl MixtureCdf {
    pub fn cdf(&self, x: f64) -> f64 {
        self.weights
            .iter()
            .zip(&self.kernels)
            .map(|(w, k)| w * k.cdf(x))
            .sum()
    }

    pub fn kernels(&self) -> &[ImhofKernel] {
        &self.kernels
    }
}

/// Bracket `[lo, hi]` for the `level`-quantile of a mixture of sums with
/// normalized weights `w_c`.
///
/// `lo`: each sum dominates `λ_max·χ²₁`, so its quantile is at least
/// `λ_max·q_{χ²₁}(level)`. `hi`: the upper tail allowance `1 − level` is split
/// evenly over the `C` components. A component with `w_c ≤ (1 − level)/C`
/// stays within its share anywhere; otherwise Cantelli's inequality at
/// `μ_c + k_c σ_c` with `k_c² = C w_c/(1 − level)` bounds `w_c P(Q_c > hi)`.
fn bracket(components: &[(f64, Moments)], level: f64) -> (f64, f64) {
    let chi1 = chi2_1_quantile(level);
    let share = components.len() as f64 / (1.0 - level);
    let mut lo = f64::INFINITY;
    let mut hi: f64 = 0.0;
    for (w, m) in components {
        lo = lo.min(m.max_weight * chi1);
        if share * w > 1.0 {
            hi = hi.max(m.mean + (share * w).sqrt() * m.var.sqrt());
        }
    }
    (lo, hi.max(lo))
}

fn chi2_1_quantile(level: f64) -> f64 {
    use statrs::distribution::{ContinuousCDF, Normal};
    let z = Normal::new(0.0, 1.0)
        .expect("standard normal")
        .inverse_cdf(0.5 + 0.5 * level);
    z * z
}

/// Quantile of the mixture at `level` by bisection to relative tolerance `rel_tol`.
pub fn mixture_quantile(
    components: &[(f64, Vec<QuadTerm>)],
    level: f64,
    rel_tol: f64,
) -> Result<f64> {
    let weights: Vec<f64> = components.iter().map(|(w, _)| *w).collect();
    mixture_quantile_by(&weights, |c| components[c].1.as_slice(), level, rel_tol)
}

/// As [`mixture_quantile`], with the terms of component `c` produced by
/// `terms(c)` on demand so that only one component is held at a time.
pub fn mixture_quantile_by<T, F>(weights: &[f64], terms: F, level: f64, rel_tol: f64) -> Result<f64>
where
    T: AsRef<[QuadTerm]>,
    F: Fn(usize) -> T,
{
    if !(level > 0.0 && level < 1.0) {
        return Err(Error::Usage(format!(
            "quantile level must be in (0,1), got {level}"
        )));
    }
    if weights.is_empty() {
        return Err(Error::Usage("mixture has no components".into()));
    }
    if weights.iter().any(|w| !(*w >= 0.0 && w.is_finite())) {
        return Err(Error::Usage(
            "mixture weights must be finite and nonnegative".into(),
        ));
    }
    let total: f64 = weights.iter().sum();
    if !(total > 0.0) {
        return Err(Error::Usage("mixture weights sum to zero".into()));
    }
    // Dropping components of relative weight below the floor moves the CDF
    // by at most their total mass.
    let kept: Vec<usize> = (0..weights.len())
        .filter(|&c| weights[c] >= MIXTURE_WEIGHT_FLOOR * total)
        .collect();
    let summary: Vec<(f64, Moments)> = kept
        .iter()
        .map(|&c| (weights[c] / total, moments(terms(c).as_ref())))
        .collect();
    let (mut lo, mut hi) = bracket(&summary, level);
    let kernels = kept
        .iter()
        .map(|&c| ImhofKernel::new(terms(c).as_ref(), lo, hi))
        .collect::<Result<Vec<_>>>()?;
    let mix = MixtureCdf {
        weights: summary.iter().map(|(w, _)| *w).collect(),
        kernels,
    };
    for _ in 0..200 {
        if hi - lo <= rel_tol * hi {
            break;
        }
        let mid = 0.5 * (lo + hi);
        if mix.cdf(mid) < level {
            lo = mid;
        } else {
            hi = mid;
        }
    }
    Ok(0.5 * (lo + hi))
}

/// Quantile of a single sum `Σ λ_i W_i`, `W_i ~ χ²₁`.
pub fn weighted_chisq_quantile(weights: &[f64], level: f64, rel_tol: f64) -> Result<f64> {
    let terms: Vec<QuadTerm> = weights.iter().map(|w| QuadTerm::central(*w)).collect();
    mixture_quantile(&[(1.0, terms)], level, rel_tol)
}

/// `P(Σ λ_i W_i ≤ x)`.
pub fn weighted_chisq_cdf(terms: &[QuadTerm], x: f64) -> Result<f64> {
    let kernel = ImhofKernel::new(terms, x.max(f64::MIN_POSITIVE), x.max(0.0))?;
    Ok(kernel.cdf(x))
}
