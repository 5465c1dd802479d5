//! Golden-section search for the maximum of a unimodal function on an interval.
//!
//! Each iteration keeps two interior points at the golden ratio and reuses
//! one of them, so the bracket shrinks by `1/φ ≈ 0.618` per evaluation.

/// `(√5 − 1)/2`
const INV_PHI: f64 = 0.618_033_988_749_894_9;

#[derive(Clone, Copy, Debug, PartialEq)]
pub struct GoldenResult {
    pub x: f64,
    pub value: f64,
    pub evaluations: usize,
}

/// Maximizes `f` on `[lo, hi]` until the bracket is narrower than `tol`.
///
/// Returns the best interior point evaluated. Equal values keep the left
/// point, so flat stretches resolve toward `lo`.
pub fn maximize<F: FnMut(f64) -> f64>(mut f: F, lo: f64, hi: f64, tol: f64) -> GoldenResult {
    assert!(hi >= lo && tol > 0.0);
    let (mut a, mut b) = (lo, hi);
    let mut c = b - INV_PHI * (b - a);
    let mut d = a + INV_PHI * (b - a);
    let mut fc = f(c);
    let mut fd = f(d);
    let mut evals = 2;
    while (b - a) > tol && evals < 500 {
        if fc >= fd {
            b = d;
            d = c;
            fd = fc;
            c = b - INV_PHI * (b - a);
            fc = f(c);
        } else {
            a = c;
            c = d;
            fc = fd;
            d = a + INV_PHI * (b - a);
            fd = f(d);
        }
        evals += 1;
    }
    let (x, value) = if fc >= fd { (c, fc) } else { (d, fd) };
    GoldenResult {
        x,
        value,
        evaluations: evals,
    }
}

#[cfg(test)]
mod tests {
    use super::*;

    #[test]
    fn finds_parabola_peak() {
        let r = maximize(|x| -(x - 0.3).powi(2), 0.0, 1.0, 1e-9);
        assert!((r.x - 0.3).abs() < 1e-8);
    }

    #[test]
    fn monotone_goes_to_edge() {
        let r = maximize(|x| x, 0.0, 2.0, 1e-10);
        assert!(r.x > 2.0 - 1e-9);
        let r = maximize(|x| -x, 0.0, 2.0, 1e-10);
        assert!(r.x < 1e-9);
    }

    #[test]
    fn degenerate_interval() {
        let r = maximize(|x| x * x, 1.5, 1.5, 1e-6);
        assert_eq!(r.x, 1.5);
    }
}
