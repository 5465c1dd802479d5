//! Posterior curve envelopes: draw from the posterior, keep the fraction of
//! draws closest to the posterior mean in ℓ², map them to functions on
//! `[0,1]` through the cosine basis `φ₁ = 1`, `φ_i(x) = √2 cos(π(i−1)x)`, and
//! take pointwise extremes.

use std::fmt::Write as _;
use std::fs;
use std::path::Path;

use serde::{Deserialize, Serialize};

use crate::error::{Error, Result};
use crate::sampling::PosteriorSampler;

#[derive(Clone, Copy, Debug, PartialEq, Eq, Default, Serialize, Deserialize)]
#[serde(rename_all = "snake_case")]
pub enum Basis {
    #[default]
    Cosine,
}

#[derive(Clone, Copy, Debug, PartialEq, Serialize, Deserialize)]
pub struct BandSpec {
    pub draws: usize,
    pub keep_fraction: f64,
    pub grid_points: usize,
    pub basis: Basis,
    /// Also return every kept curve.
    #[serde(default)]
    pub keep_curves: bool,
}

impl Default for BandSpec {
    fn default() -> Self {
        Self {
            draws: 2000,
            keep_fraction: 0.95,
            grid_points: 512,
            basis: Basis::Cosine,
            keep_curves: false,
        }
    }
}

impl BandSpec {
    pub fn validate(&self) -> Result<()> {
        if !(self.keep_fraction > 0.0 && self.keep_fraction <= 1.0) {
            return Err(Error::Config(format!(
                "keep_fraction must be in (0,1], got {}",
                self.keep_fraction
            )));
        }
        if self.draws == 0 {
            return Err(Error::Config("draws must be at least 1".into()));
        }
        if self.grid_points < 2 {
            return Err(Error::Config("grid_points must be at least 2".into()));
        }
        Ok(())
    }

    /// `⌈keep_fraction · draws⌉`.
    pub fn kept_count(&self) -> usize {
        ((self.keep_fraction * self.draws as f64).ceil() as usize).clamp(1, self.draws)
    }
}

#[derive(Clone, Debug, PartialEq)]
pub struct BandResult {
    pub grid: Vec<f64>,
    pub lower: Vec<f64>,
    pub upper: Vec<f64>,
    pub center_curve: Vec<f64>,
    pub kept: usize,
    /// Indices of the kept draws, closest first.
    pub kept_indices: Vec<usize>,
    pub curves: Option<Vec<Vec<f64>>>,
}

/// Uniform grid `x_k = k/(G−1)`.
pub fn uniform_grid(points: usize) -> Vec<f64> {
    let last = (points - 1) as f64;
    (0..points).map(|k| k as f64 / last).collect()
}

/// Evaluates `Σ θ_i φ_i` on the uniform grid with `G` points.
///
/// On the grid `cos(π(i−1)k/(G−1))` depends on `i−1` only modulo `2(G−1)`,
/// so coefficients are folded into `2(G−1)` bins first; the cost is
/// `O(D + G²)` with the cosine table shared by all curves.
pub struct CosineEvaluator {
    points: usize,
    period: usize,
    /// `table[k·period + j] = cos(π j k/(G−1))`
    table: Vec<f64>,
}

impl CosineEvaluator {
    pub fn new(points: usize) -> Self {
        let period = 2 * (points - 1);
        let mut table = Vec::with_capacity(points * period);
        for k in 0..points {
            for j in 0..period {
                // reduce j·k exactly before scaling, keeping arguments in [0, 2π)
                let r = (j * k) % period;
                table.push((std::f64::consts::PI * r as f64 / (points - 1) as f64).cos());
            }
        }
        Self {
            points,
            period,
            table,
        }
    }

    pub fn eval(&self, theta: &[f64]) -> Vec<f64> {
        let mut bins = vec![0.0; self.period];
        for (idx, t) in theta.iter().enumerate() {
            if idx == 0 {
                continue;
            }
            bins[idx % self.period] += t;
        }
        let first = theta.first().copied().unwrap_or(0.0);
        let s2 = std::f64::consts::SQRT_2;
        (0..self.points)
            .map(|k| {
                let row = &self.table[k * self.period..(k + 1) * self.period];
                first + s2 * row.iter().zip(&bins).map(|(c, b)| c * b).sum::<f64>()
            })
            .collect()
    }
}

/// Direct evaluation of the cosine series at `x`.
pub fn cosine_series(theta: &[f64], x: f64) -> f64 {
    let s2 = std::f64::consts::SQRT_2;
    theta
        .iter()
        .enumerate()
        .map(|(i, t)| {
            if i == 0 {
                *t
            } else {
                t * s2 * (std::f64::consts::PI * i as f64 * x).cos()
            }
        })
        .sum()
}

fn sq_dist(a: &[f64], b: &[f64]) -> f64 {
    a.iter().zip(b).map(|(x, y)| (x - y) * (x - y)).sum()
}

pub fn render_band<S: PosteriorSampler + ?Sized>(
    source: &S,
    spec: &BandSpec,
    seed: u64,
) -> Result<BandResult> {
    spec.validate()?;
    let draws = source.sample(spec.draws, seed);
    let center = source.center();
    let mut order: Vec<(f64, usize)> = draws
        .rows()
        .enumerate()
        .map(|(k, row)| (sq_dist(row, center), k))
        .collect();
    order.sort_by(|a, b| a.0.total_cmp(&b.0).then(a.1.cmp(&b.1)));
    let kept = spec.kept_count();
    let kept_indices: Vec<usize> = order[..kept].iter().map(|(_, k)| *k).collect();

    let eval = CosineEvaluator::new(spec.grid_points);
    let center_curve = eval.eval(center);
    let mut lower = vec![f64::INFINITY; spec.grid_points];
    let mut upper = vec![f64::NEG_INFINITY; spec.grid_points];
    let mut curves = spec.keep_curves.then(Vec::new);
    for &k in &kept_indices {
        let f = eval.eval(draws.row(k));
        for ((lo, hi), v) in lower.iter_mut().zip(upper.iter_mut()).zip(&f) {
            *lo = lo.min(*v);
            *hi = hi.max(*v);
        }
        if let Some(c) = curves.as_mut() {
            c.push(f);
        }
    }
    Ok(BandResult {
        grid: uniform_grid(spec.grid_points),
        lower,
        upper,
        center_curve,
        kept,
        kept_indices,
        curves,
    })
}

#[derive(Clone, Copy, Debug, PartialEq, Eq, Serialize, Deserialize)]
#[serde(rename_all = "snake_case")]
pub enum BandFormat {
    Csv,
    Svg,
}

impl BandFormat {
    pub fn extension(&self) -> &'static str {
        match self {
            BandFormat::Csv => "csv",
            BandFormat::Svg => "svg",
        }
    }
}

impl std::str::FromStr for BandFormat {
    type Err = Error;

    fn from_str(s: &str) -> Result<Self> {
        match s {
            "csv" => Ok(BandFormat::Csv),
            "svg" => Ok(BandFormat::Svg),
            other => Err(Error::Usage(format!("unknown band format `{other}`"))),
        }
    }
}

/// `band_<method>_<n>_<seed>.<ext>`
pub fn band_file_name(method: &str, n: u64, seed: u64, format: BandFormat) -> String {
    format!("band_{method}_{n}_{seed}.{}", format.extension())
}

pub const CSV_HEADER: &str = "x,lower,center,upper";

pub fn to_csv(band: &BandResult) -> String {
    let mut s = String::with_capacity(80 * band.grid.len());
    s.push_str(CSV_HEADER);
    s.push('\n');
    for k in 0..band.grid.len() {
        let _ = writeln!(
            s,
            "{:.16e},{:.16e},{:.16e},{:.16e}",
            band.grid[k], band.lower[k], band.center_curve[k], band.upper[k]
        );
    }
    s
}

/// Parses the CSV written by [`to_csv`] into `(x, lower, center, upper)` columns.
pub fn parse_csv(text: &str) -> Result<[Vec<f64>; 4]> {
    let mut lines = text.lines();
    if lines.next() != Some(CSV_HEADER) {
        return Err(Error::Serde(format!(
            "band csv must start with '{CSV_HEADER}'"
        )));
    }
    let mut cols: [Vec<f64>; 4] = Default::default();
    for (row, line) in lines.enumerate() {
        let fields: Vec<&str> = line.split(',').collect();
        if fields.len() != 4 {
            return Err(Error::Serde(format!(
                "band csv row {} has {} fields",
                row + 1,
                fields.len()
            )));
        }
        for (col, f) in cols.iter_mut().zip(fields) {
            col.push(
                f.parse()
                    .map_err(|e| Error::Serde(format!("band csv row {}: {e}", row + 1)))?,
            );
        }
    }
    Ok(cols)
}

pub const SVG_WIDTH: f64 = 800.0;
pub const SVG_HEIGHT: f64 = 500.0;
const MARGIN: f64 = 40.0;

pub fn to_svg(band: &BandResult) -> String {
    let (mut ymin, mut ymax) = band
        .lower
        .iter()
        .chain(&band.upper)
        .fold((f64::INFINITY, f64::NEG_INFINITY), |(a, b), v| {
            (a.min(*v), b.max(*v))
        });
    if !(ymax > ymin) {
        ymin -= 1.0;
        ymax += 1.0;
    }
    let sx = |x: f64| MARGIN + x * (SVG_WIDTH - 2.0 * MARGIN);
    let sy =
        |y: f64| SVG_HEIGHT - MARGIN - (y - ymin) / (ymax - ymin) * (SVG_HEIGHT - 2.0 * MARGIN);
    let points = |ys: &mut dyn Iterator<Item = (f64, f64)>| {
        ys.map(|(x, y)| format!("{:.3},{:.3}", sx(x), sy(y)))
            .collect::<Vec<_>>()
            .join(" ")
    };
    let hull = points(
        &mut band
            .grid
            .iter()
            .copied()
            .zip(band.upper.iter().copied())
            .chain(
                band.grid
                    .iter()
                    .copied()
                    .zip(band.lower.iter().copied())
                    .rev(),
            ),
    );
    let center = points(
        &mut band
            .grid
            .iter()
            .copied()
            .zip(band.center_curve.iter().copied()),
    );
    let mut s = String::new();
    let _ = writeln!(
        s,
        r#"<svg xmlns="http://www.w3.org/2000/svg" viewBox="0 0 {SVG_WIDTH} {SVG_HEIGHT}" width="{SVG_WIDTH}" height="{SVG_HEIGHT}">"#
    );
    let _ = writeln!(
        s,
        r#"  <rect x="0" y="0" width="{SVG_WIDTH}" height="{SVG_HEIGHT}" fill="white"/>"#
    );
    if let Some(curves) = &band.curves {
        s.push_str("  <g fill=\"none\" stroke=\"#bbbbbb\" stroke-width=\"0.5\">\n");
        for c in curves {
            let p = points(&mut band.grid.iter().copied().zip(c.iter().copied()));
            let _ = writeln!(s, r#"    <polyline points="{p}"/>"#);
        }
        s.push_str("  </g>\n");
    }
    let _ = writeln!(
        s,
        r##"  <polygon points="{hull}" fill="#cccccc" fill-opacity="0.7" stroke="none"/>"##
    );
    let _ = writeln!(
        s,
        r##"  <polyline points="{center}" fill="none" stroke="#000000" stroke-width="1.5"/>"##
    );
    s.push_str("</svg>\n");
    s
}

pub fn emit(band: &BandResult, format: BandFormat, path: &Path) -> Result<()> {
    let text = match format {
        BandFormat::Csv => to_csv(band),
        BandFormat::Svg => to_svg(band),
    };
    fs::write(path, text).map_err(|e| Error::io(path, e))
}
