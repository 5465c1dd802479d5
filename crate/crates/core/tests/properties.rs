use credball::adapt::normalize_log_weights;
use credball::band::{cosine_series, BandSpec, CosineEvaluator};
use credball::conjugate::{fit_posterior, PriorParams};
use credball::credible::{build_ball, BallMethod, CredibleSpec, RadiusEstimate, RadiusMethod};
use credball::golden::maximize;
use credball::harness::{fit_slope, summarize, ReplicateRow};
use credball::model::{l2_norm, make_truth, simulate_observation, ModelConfig, Truth, TruthFamily};
use credball::quadform::{weighted_chisq_cdf, QuadTerm};
use proptest::prelude::*;

fn config() -> ProptestConfig {
    ProptestConfig::with_cases(48)
}

fn small_obs(n: u64, p: f64, seed: u64) -> credball::model::Observation {
    let cfg = ModelConfig::with_dim(n, p, 200).unwrap();
    let truth = make_truth(TruthFamily::SelfSimilar, 1.0, 1.0, &cfg, 0).unwrap();
    simulate_observation(&truth, &cfg, seed).unwrap()
}

proptest! {
    #![proptest_config(config())]

    #[test]
    fn posterior_variance_below_prior(
        alpha in 0.0f64..3.0, tau in 0.05f64..20.0, n in 1u64..100_000, p in 0.0f64..2.0, seed in 0u64..1000,
    ) {
        let obs = small_obs(n, p, seed);
        let params = PriorParams::new(alpha, tau).unwrap();
        let post = fit_posterior(&obs, params).unwrap();
        for (i, s2) in post.var.iter().enumerate() {
            prop_assert!(*s2 > 0.0);
            prop_assert!(*s2 <= params.prior_var(i + 1) * (1.0 + 1e-14));
        }
        prop_assert!(post.log_marginal.is_finite());
    }

    #[test]
    fn posterior_variance_shrinks_with_n(alpha in 0.0f64..3.0, n in 1u64..50_000, p in 0.0f64..2.0) {
        let params = PriorParams::new(alpha, 1.0).unwrap();
        let a = fit_posterior(&small_obs(n, p, 1), params).unwrap();
        let b = fit_posterior(&small_obs(2 * n, p, 1), params).unwrap();
        for (x, y) in a.var.iter().zip(&b.var) {
            prop_assert!(y <= x);
        }
    }

    #[test]
    fn weights_ignore_common_shift(
        logs in prop::collection::vec(-50.0f64..50.0, 1..40), shift in -1e3f64..1e3,
    ) {
        let w = normalize_log_weights(&logs).unwrap();
        let shifted: Vec<f64> = logs.iter().map(|l| l + shift).collect();
        let v = normalize_log_weights(&shifted).unwrap();
        prop_assert!((w.iter().sum::<f64>() - 1.0).abs() < 1e-12);
        for (a, b) in w.iter().zip(&v) {
            prop_assert!((a - b).abs() <= 1e-12);
        }
    }

    #[test]
    fn blown_radius_is_exact(radius in 1e-6f64..1e3, blowup in 0.1f64..10.0) {
        let est = RadiusEstimate { radius, se: 0.0, method: RadiusMethod::Imhof, warning: None };
        let ball = build_ball(vec![0.0; 3], &est, CredibleSpec::new(0.05, blowup).unwrap(), BallMethod::EbAlpha).unwrap();
        prop_assert_eq!(ball.blown_radius, blowup * radius);
    }

    #[test]
    fn membership_ignores_permutation(
        pairs in prop::collection::vec((-2.0f64..2.0, -2.0f64..2.0), 1..30),
        radius in 0.1f64..3.0,
        key in any::<u64>(),
    ) {
        let (center, theta): (Vec<f64>, Vec<f64>) = pairs.iter().copied().unzip();
        let est = RadiusEstimate { radius, se: 0.0, method: RadiusMethod::Imhof, warning: None };
        let spec = CredibleSpec::new(0.05, 1.0).unwrap();
        let ball = build_ball(center.clone(), &est, spec, BallMethod::Hb).unwrap();
        let mut order: Vec<usize> = (0..pairs.len()).collect();
        order.sort_by_key(|i| (*i as u64).wrapping_mul(key | 1).rotate_left(17));
        let pc: Vec<f64> = order.iter().map(|&i| center[i]).collect();
        let pt: Vec<f64> = order.iter().map(|&i| theta[i]).collect();
        let permuted = build_ball(pc, &est, spec, BallMethod::Hb).unwrap();
        prop_assert_eq!(ball.contains(&theta).unwrap(), permuted.contains(&pt).unwrap());
    }

    #[test]
    fn truth_norm_matches(beta in 0.0f64..3.0, scale in 0.01f64..10.0, seed in 0u64..100) {
        let cfg = ModelConfig::with_dim(100, 0.0, 500).unwrap();
        for family in [TruthFamily::SelfSimilar, TruthFamily::BlockGap, TruthFamily::SobolevRandom] {
            let t = make_truth(family, beta, scale, &cfg, seed).unwrap();
            let direct = t.theta.iter().map(|v| v * v).sum::<f64>().sqrt();
            prop_assert!((t.norm2 - direct).abs() <= 1e-12 * direct);
            prop_assert!((l2_norm(&t.theta) - direct).abs() <= 1e-12 * direct);
        }
    }

    #[test]
    fn kept_count_is_ceiling(draws in 1usize..5000, keep in 0.001f64..1.0) {
        let spec = BandSpec { draws, keep_fraction: keep, ..BandSpec::default() };
        let expect = (keep * draws as f64).ceil() as usize;
        prop_assert_eq!(spec.kept_count(), expect.clamp(1, draws));
    }

    #[test]
    fn folded_cosines_match_direct(theta in prop::collection::vec(-1.0f64..1.0, 1..300), points in 2usize..40) {
        let eval = CosineEvaluator::new(points);
        let fast = eval.eval(&theta);
        for (k, v) in fast.iter().enumerate() {
            let x = k as f64 / (points - 1) as f64;
            prop_assert!((v - cosine_series(&theta, x)).abs() < 1e-10);
        }
    }

    #[test]
    fn golden_finds_concave_peak(peak in -5.0f64..5.0, width in 0.1f64..10.0) {
        let r = maximize(|x| -((x - peak) / width).powi(2), -6.0, 6.0, 1e-9);
        prop_assert!((r.x - peak).abs() < 1e-7);
    }

    #[test]
    fn slope_of_exact_power_law(slope in -2.0f64..2.0, icept in -5.0f64..5.0, k in 2usize..8) {
        let x: Vec<f64> = (0..k).map(|i| 10f64.powi(i as i32 + 2)).collect();
        let y: Vec<f64> = x.iter().map(|v| icept.exp() * v.powf(slope)).collect();
        let f = fit_slope(&x, &y).unwrap();
        prop_assert!((f.slope - slope).abs() < 1e-10);
    }

    #[test]
    fn coverage_se_formula(covered in prop::collection::vec(any::<bool>(), 1..200)) {
        let rows: Vec<ReplicateRow> = covered.iter().enumerate().map(|(r, c)| ReplicateRow {
            n: 10, r: r as u64, seed: 0, covered: *c, distance: 0.0, radius: 1.0,
            blown_radius: 1.0, estimate: 0.0, at_boundary: false,
        }).collect();
        let row = summarize(10, rows.len(), &rows);
        let c = covered.iter().filter(|b| **b).count() as f64 / rows.len() as f64;
        prop_assert!((row.coverage - c).abs() < 1e-15);
        prop_assert!((0.0..=1.0).contains(&row.coverage));
        prop_assert!((row.se - (c * (1.0 - c) / rows.len() as f64).sqrt()).abs() < 1e-15);
    }

    #[test]
    fn chisq_cdf_is_monotone(weights in prop::collection::vec(0.001f64..1.0, 1..20), a in 0.01f64..5.0, b in 0.01f64..5.0) {
        let terms: Vec<QuadTerm> = weights.iter().map(|w| QuadTerm::central(*w)).collect();
        let (lo, hi) = if a < b { (a, b) } else { (b, a) };
        let fl = weighted_chisq_cdf(&terms, lo).unwrap();
        let fh = weighted_chisq_cdf(&terms, hi).unwrap();
        prop_assert!((0.0..=1.0).contains(&fl) && (0.0..=1.0).contains(&fh));
        prop_assert!(fl <= fh + 1e-9);
    }
}

#[test]
fn custom_truth_rejects_nonfinite() {
    assert!(Truth::custom(vec![1.0, f64::NAN], 0.0).is_err());
}
