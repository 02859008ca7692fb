use corrfbm::pickands::{
    coupled_crude_constants, cross_term_constant, estimate_drifted_constant, estimate_drifted_constant_with,
    estimate_pickands, lemma_a_constant, lemma_a_scaling, Interval, PickandsMethod, PickandsOptions,
};
use corrfbm::special::{norm_cdf, norm_pdf};
use proptest::prelude::*;

fn iv(lo: f64, hi: f64) -> Interval {
    Interval::new(lo, hi).unwrap()
}

fn simpson<F: Fn(f64) -> f64>(f: F, a: f64, b: f64, n: usize) -> f64 {
    let h = (b - a) / n as f64;
    let mut s = f(a) + f(b);
    for i in 1..n {
        s += f(a + i as f64 * h) * if i % 2 == 1 { 4.0 } else { 2.0 };
    }
    s * h / 3.0
}

/// `E exp(sup_{[0,T]} (sqrt(2) W(t) - (1 + b) t))` from the law of the running
/// maximum of drifted Brownian motion.
fn drifted_brownian_oracle(b: f64, t: f64) -> f64 {
    let mu = (1.0 + b) / std::f64::consts::SQRT_2;
    let sf = |x: f64| {
        let cdf = norm_cdf((x + mu * t) / t.sqrt()) - (-2.0 * mu * x).exp() * norm_cdf((-x + mu * t) / t.sqrt());
        1.0 - cdf
    };
    let k = std::f64::consts::SQRT_2;
    1.0 + simpson(|x| k * (k * x).exp() * sf(x), 0.0, 40.0, 40_000)
}

#[test]
fn oracle_sanity() {
    // b = 0 has the closed form (2 + T) Phi(c) + sqrt(2T) phi(c), c = sqrt(T/2)
    let t = 3.0;
    let c = (t / 2.0f64).sqrt();
    let closed = (2.0 + t) * norm_cdf(c) + (2.0 * t).sqrt() * norm_pdf(c);
    assert!((drifted_brownian_oracle(0.0, t) - closed).abs() < 1e-8);
    // exponential maximum in the infinite window
    assert!((drifted_brownian_oracle(1.0, 200.0) - 2.0).abs() < 1e-6);
}

#[test]
fn degenerate_interval_gives_one() {
    for alpha in [0.3, 1.0, 1.7] {
        let e = estimate_drifted_constant(alpha, -0.7, Interval::point(0.0), 0.01, 50, 9).unwrap();
        assert_eq!(e.value, 1.0);
        let q = lemma_a_constant(alpha.min(1.0), 0.2, Interval::point(0.0), 0.01, 50, 9).unwrap();
        assert_eq!(q.value, 1.0);
    }
}

#[test]
fn large_drift_kills_excursions() {
    let e = estimate_drifted_constant(1.0, 50.0, iv(0.0, 5.0), 0.01, 2_000, 2).unwrap();
    assert!((e.value - 1.0).abs() < 0.01, "{}", e.value);
}

#[test]
fn drifted_brownian_constant_is_two() {
    let t = 20.0;
    let e = estimate_drifted_constant(1.0, 1.0, iv(0.0, t), 0.01, 20_000, 5).unwrap();
    let exact = drifted_brownian_oracle(1.0, t);
    assert!((exact - 2.0).abs() < 1e-6);
    assert!((e.value - exact).abs() < 0.05 * exact, "{} +- {} vs {exact}", e.value, e.std_error);
}

#[test]
fn brownian_window_trend_toward_one() {
    let mut last = f64::INFINITY;
    for t in [2.0, 8.0] {
        let c = (t / 2.0f64).sqrt();
        let exact = ((2.0 + t) * norm_cdf(c) + (2.0 * t).sqrt() * norm_pdf(c)) / t;
        let e = estimate_pickands(1.0, t, 0.01, 20_000, 6).unwrap();
        assert!((e.value - exact).abs() < 4.0 * e.std_error + 0.03 * exact, "T = {t}: {} vs {exact}", e.value);
        assert!(exact < last && exact > 1.0);
        last = exact;
    }
}

#[test]
fn smooth_case_matches_exact_window_value() {
    // B_2(t) = Z t, so the window constant is 1 + T / sqrt(pi)
    for t in [1.0, 4.0] {
        let exact = 1.0 + t / std::f64::consts::PI.sqrt();
        let e = estimate_drifted_constant(2.0, 0.0, iv(0.0, t), 0.01, 20_000, 7).unwrap();
        assert!((e.value - exact).abs() < 4.0 * e.std_error + 0.01 * exact, "T = {t}: {} vs {exact}", e.value);
        let h = estimate_pickands(2.0, t, 0.01, 20_000, 7).unwrap();
        assert!((h.value - e.value / t).abs() < 1e-12 * e.value);
    }
}

#[test]
fn reflection_symmetry() {
    for alpha in [0.6, 1.0, 1.5] {
        let a = estimate_drifted_constant(alpha, 0.0, iv(0.0, 3.0), 0.01, 20_000, 11).unwrap();
        let b = estimate_drifted_constant(alpha, 0.0, iv(-3.0, 0.0), 0.01, 20_000, 12).unwrap();
        let se = a.std_error.hypot(b.std_error);
        assert!((a.value - b.value).abs() < 3.0 * se, "alpha {alpha}: {} vs {}", a.value, b.value);
    }
}

#[test]
fn local_constant_reflects_to_a_positive_drift() {
    let r = 0.3;
    let t = 2.0;
    let q = lemma_a_constant(1.0, r, iv(-t, 0.0), 0.01, 20_000, 13).unwrap();
    let scale = (1.0 / (std::f64::consts::SQRT_2 * (1.0 + r))).powi(2);
    let h = estimate_drifted_constant(1.0, 1.0 + r, iv(0.0, t * scale), 0.01, 20_000, 14).unwrap();
    assert!((q.value - h.value).abs() < 3.0 * q.std_error.hypot(h.std_error), "{} vs {}", q.value, h.value);
    let exact = drifted_brownian_oracle(1.0 + r, t * scale);
    assert!((q.value - exact).abs() < 4.0 * q.std_error + 0.02 * exact, "{} vs {exact}", q.value);
}

#[test]
fn local_constant_delegates_with_scaled_interval() {
    let (scale, b) = lemma_a_scaling(0.5, 0.0);
    assert!((scale - 0.25).abs() < 1e-15);
    assert_eq!(b, 0.0);
    let q = lemma_a_constant(0.5, 0.0, iv(0.0, 1.0), 0.005, 2_000, 15).unwrap();
    let h = estimate_drifted_constant(0.5, 0.0, iv(0.0, 0.25), 0.005, 2_000, 15).unwrap();
    assert_eq!(q.value, h.value);
    assert_eq!(q.std_error, h.std_error);
    assert!(lemma_a_constant(1.2, 0.0, iv(0.0, 1.0), 0.01, 10, 1).is_err());
    assert!(lemma_a_constant(1.0, 1.0, iv(0.0, 1.0), 0.01, 10, 1).is_err());
}

#[test]
fn cross_terms_decay_with_the_gap() {
    let t = 2.0;
    let vals: Vec<_> = [1u32, 2, 4, 8]
        .iter()
        .map(|&n| cross_term_constant(1.0, n, t, 0.01, 20_000, 16 + n as u64).unwrap())
        .collect();
    for w in vals.windows(2) {
        assert!(w[1].estimate < w[0].estimate + 3.0 * w[0].std_error.hypot(w[1].std_error));
    }
    assert!(vals[3].estimate < 0.5 * vals[0].estimate, "{:?}", vals.iter().map(|v| v.estimate).collect::<Vec<_>>());
    assert!(vals.iter().all(|v| v.estimate > 0.0));
}

#[test]
fn cross_term_is_dominated_by_single_window() {
    let c = cross_term_constant(1.0, 1, 5.0, 0.01, 20_000, 17).unwrap();
    let h = estimate_drifted_constant(1.0, 0.0, iv(0.0, 5.0), 0.01, 20_000, 18).unwrap();
    assert!(c.estimate > 0.0);
    assert!(c.estimate < h.value - 3.0 * c.std_error.hypot(h.std_error), "{} vs {}", c.estimate, h.value);
}

#[test]
fn invalid_inputs() {
    assert!(Interval::new(1.0, 0.0).is_err());
    assert!(estimate_drifted_constant(2.5, 0.0, iv(0.0, 1.0), 0.01, 10, 1).is_err());
    assert!(estimate_drifted_constant(1.0, 0.0, iv(0.0, 1.0), 0.0, 10, 1).is_err());
    assert!(estimate_drifted_constant(1.0, 0.0, iv(0.0, 1.0), 0.01, 0, 1).is_err());
    assert!(estimate_pickands(1.0, 0.0, 0.01, 10, 1).is_err());
    assert!(cross_term_constant(1.0, 0, 1.0, 0.01, 10, 1).is_err());
}

proptest! {
    #![proptest_config(ProptestConfig::with_cases(24))]

    #[test]
    fn coupled_estimates_are_monotone(
        alpha in 0.3f64..2.0,
        lo in 0.0f64..1.0,
        width in 0.1f64..2.0,
        b in -0.5f64..1.0,
        db in 0.0f64..1.0,
        seed in any::<u64>(),
    ) {
        let inner = iv(lo, lo + width);
        let outer = iv(0.0, lo + width + 0.5);
        let queries = [(b, inner), (b, outer), (b + db, outer)];
        let e = coupled_crude_constants(alpha, outer, &queries, 0.02, 200, seed).unwrap();
        prop_assert!(e[0].estimate <= e[1].estimate);
        prop_assert!(e[2].estimate <= e[1].estimate);
        prop_assert!(e[1].estimate >= 1.0);
    }

    #[test]
    fn crude_estimate_is_at_least_one_when_zero_is_included(
        alpha in 0.3f64..2.0,
        lo in -1.0f64..=0.0,
        hi in 0.0f64..1.0,
        b in -1.0f64..1.0,
        seed in any::<u64>(),
    ) {
        let opts = PickandsOptions { method: PickandsMethod::Crude, refine: false, ..PickandsOptions::new(0.02, 100, seed) };
        let e = estimate_drifted_constant_with(alpha, b, iv(lo, hi), &opts).unwrap();
        prop_assert!(e.value >= 1.0 && e.value.is_finite());
    }

    #[test]
    fn estimates_are_reproducible(alpha in 0.3f64..2.0, seed in any::<u64>()) {
        let a = estimate_drifted_constant(alpha, 0.2, iv(-0.5, 1.0), 0.02, 100, seed).unwrap();
        let b = estimate_drifted_constant(alpha, 0.2, iv(-0.5, 1.0), 0.02, 100, seed).unwrap();
        prop_assert_eq!(a, b);
        prop_assert!(a.value > 0.0 && a.value.is_finite());
    }
}
