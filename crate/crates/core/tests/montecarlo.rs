use corrfbm::bounds::Region;
use corrfbm::montecarlo::{
    bonferroni_check, conditional_fpt_sample, conditional_fpt_weighted, fpt_limit_test, fpt_pair, independence_ratio,
    joint_survival, joint_survival_grid, lemma_a_rhs, local_prob, union_prob, DiscreteSpace, EstimateWithCI,
    FptSample,
};
use corrfbm::asymptotics::{h, joint_prefactor};
use corrfbm::pickands::Interval;
use corrfbm::special::{bvn_upper, norm_sf};
use corrfbm::{path_supremum, Error, Grid, ModelParams, PairSampler, SeedSpec};
use proptest::prelude::*;
use rand::Rng;
use rand_distr::Exp1;

fn p(a1: f64, a2: f64, r: f64) -> ModelParams {
    ModelParams::new(a1, a2, r).unwrap()
}

fn bm() -> ModelParams {
    p(1.0, 1.0, 0.0)
}

/// Overshoot-corrected `P(max_{k <= n} W(k/n) > u)` for Brownian motion.
fn discrete_brownian_tail(u: f64, n: usize) -> f64 {
    2.0 * norm_sf(u + 0.5826 / (n as f64).sqrt())
}

#[test]
fn zero_threshold_is_almost_sure() {
    let mut last = 0.0;
    for n in [64, 256, 1024] {
        let g = Grid::uniform(n, 1.0).unwrap();
        let c = joint_survival_grid(&[0.0], &bm(), &g, &g, 20_000, 1).unwrap();
        let e = c.points[0].grid.estimate;
        assert!(e > last && e < 1.0, "n = {n}: {e}");
        last = e;
    }
    let g = Grid::uniform(1024, 1.0).unwrap();
    let best = joint_survival_grid(&[0.0], &bm(), &g, &g, 20_000, 1).unwrap().points[0].best();
    assert!((best.estimate - 1.0).abs() < 4.0 * best.std_error + 0.005, "{best:?}");
}

#[test]
fn brownian_product_at_u_one() {
    let exact = (2.0 * norm_sf(1.0)).powi(2);
    assert!((exact - 0.1007).abs() < 1e-4);
    let g = Grid::uniform(1024, 1.0).unwrap();
    let best = joint_survival_grid(&[1.0], &bm(), &g, &g, 200_000, 2).unwrap().points[0].best();
    assert!(best.within(exact, 4.0), "{best:?} vs {exact}");
    let raw = joint_survival(1.0, &bm(), &g, 200_000, 2).unwrap();
    assert!(raw.within(discrete_brownian_tail(1.0, 1024).powi(2), 4.0), "{raw:?}");
}

#[test]
fn union_over_the_full_square_is_joint_survival() {
    let q = p(0.8, 1.2, 0.0);
    let g = Grid::uniform(128, 1.0).unwrap();
    for u in [0.5, 1.5] {
        let a = union_prob(u, &q, &Region::square(0.0, 1.0).unwrap(), 128, 20_000, 3).unwrap();
        let b = joint_survival(u, &q, &g, 20_000, 3).unwrap();
        assert_eq!(a.estimate, b.estimate);
    }
}

#[test]
fn union_over_two_point_sides_is_bracketed_by_bivariate_tails() {
    let (u, r) = (0.8, 0.4);
    let q = p(1.0, 1.0, r);
    // each side holds the points 63/64 and 1
    let e = union_prob(u, &q, &Region::square(1.0 - 1.0 / 64.0, 1.0).unwrap(), 64, 200_000, 4).unwrap();
    assert_eq!(e.grid_points, 2);
    let pts = [63.0 / 64.0, 1.0f64];
    let tail = |s: f64, t: f64| bvn_upper(u / s.sqrt(), u / t.sqrt(), r);
    let lower = pts.iter().flat_map(|&s| pts.iter().map(move |&t| tail(s, t))).fold(0.0, f64::max);
    let upper: f64 = pts.iter().flat_map(|&s| pts.iter().map(move |&t| tail(s, t))).sum();
    assert!(e.estimate >= lower - 4.0 * e.std_error && e.estimate <= upper + 4.0 * e.std_error, "{e:?}");
}

#[test]
fn local_prob_degenerate_windows() {
    let (u, r) = (2.0, 0.3);
    let q = p(1.0, 1.0, r);
    let z = Interval::point(0.0);
    let (s0, t0) = (1.0, 0.95);
    let e = local_prob(u, &q, s0, t0, z, z, 0.1, 400_000, 5).unwrap();
    let exact = bvn_upper(u / s0.sqrt(), u / t0.sqrt(), r);
    assert!(e.within(exact, 4.0), "{e:?} vs {exact}");
    let rhs = lemma_a_rhs(u, &q, s0, t0, 1.0, 1.0).unwrap();
    let want = joint_prefactor(r) / (u * u) * (-u * u * h(s0, t0, &q).unwrap() / 2.0).exp();
    assert!((rhs - want).abs() <= 1e-15 * want);
    assert!(matches!(
        local_prob(u, &q, 0.5, 1.0, z, z, 0.1, 10, 5),
        Err(Error::HypothesisViolated(_))
    ));
}

#[test]
fn local_prob_grows_with_the_window() {
    let q = bm();
    let z = Interval::point(0.0);
    let l = Interval::new(-2.0, 0.0).unwrap();
    let a = local_prob(2.0, &q, 1.0, 1.0, z, z, 0.05, 100_000, 6).unwrap();
    let b = local_prob(2.0, &q, 1.0, 1.0, l, l, 0.05, 100_000, 6).unwrap();
    assert!(b.estimate > a.estimate + 3.0 * a.std_error.hypot(b.std_error), "{a:?} {b:?}");
}

#[test]
fn passage_times_match_the_sampled_paths() {
    let q = p(1.0, 1.3, 0.2);
    let g1 = Grid::uniform_window(64, 1.0, 0.25).unwrap();
    let g2 = Grid::uniform_window(64, 1.0, 0.25).unwrap();
    let sampler = PairSampler::new(&q, &g1, &g2).unwrap();
    let u = 0.7;
    for i in 0..200 {
        let seed = SeedSpec::new(7, i);
        let f = fpt_pair(u, &q, &g1, &g2, seed).unwrap();
        let pair = sampler.sample(seed);
        for (tau, x, g) in [(f.tau1, &pair.x1, &g1), (f.tau2, &pair.x2, &g2)] {
            let first = x[1..].iter().position(|&v| v > u).map_or(f64::INFINITY, |k| g.points()[k]);
            assert_eq!(tau, first);
            let (m, arg) = path_supremum(&x[1..]);
            if m > u {
                assert!(tau <= g.points()[arg]);
                assert!(g.points().contains(&tau));
            } else {
                assert_eq!(tau, f64::INFINITY);
            }
        }
        assert_eq!(f.both_by_one, f.tau1 <= 1.0 && f.tau2 <= 1.0);
    }
}

#[test]
fn passage_sentinel_and_low_level() {
    let g = Grid::uniform(32, 1.0).unwrap();
    let f = fpt_pair(100.0, &bm(), &g, &g, SeedSpec::new(8, 0)).unwrap();
    assert_eq!((f.tau1, f.tau2, f.both_by_one), (f64::INFINITY, f64::INFINITY, false));
    let s = PairSampler::new(&bm(), &g, &g).unwrap();
    let mut seen = 0;
    for i in 0..100 {
        let seed = SeedSpec::new(8, i);
        if s.sample(seed).x1[1] > 1e-12 {
            assert_eq!(fpt_pair(1e-12, &bm(), &g, &g, seed).unwrap().tau1, g.points()[0]);
            seen += 1;
        }
    }
    assert!(seen > 20);
    assert!(fpt_pair(0.0, &bm(), &g, &g, SeedSpec::new(8, 0)).is_err());
}

#[test]
fn rejection_rate_estimates_joint_survival() {
    let g = Grid::uniform_window(64, 1.0, 0.125).unwrap();
    for (q, u) in [(p(1.0, 1.0, 0.3), 1.5), (bm(), 1.8)] {
        let c = conditional_fpt_sample(u, &q, &g, &g, 3_000, 9).unwrap();
        assert_eq!(c.product_form, q.r() == 0.0);
        assert_eq!(c.samples.len(), 3_000);
        assert!(c.samples.iter().all(|s| s.both_by_one && s.tau1 <= 1.0 && s.tau2 <= 1.0));
        let j = joint_survival(u, &q, &g, 200_000, 10).unwrap();
        let se = c.acceptance.std_error.hypot(j.std_error);
        assert!((c.acceptance.estimate - j.estimate).abs() < 3.0 * se, "{:?} vs {j:?}", c.acceptance);
    }
}

#[test]
fn weighted_conditional_sample_agrees_with_rejection() {
    let q = p(1.0, 1.0, 0.3);
    let g = Grid::uniform_window(64, 1.0, 0.125).unwrap();
    let w = conditional_fpt_weighted(2.0, &q, &g, &g, 20_000, 11).unwrap();
    assert!(w.samples.iter().all(|(s, wt)| s.both_by_one && *wt >= 0.0));
    assert!(w.ess > 1_000.0 && w.ess <= 20_000.0);
    let c = conditional_fpt_sample(2.0, &q, &g, &g, 2_000, 12).unwrap();
    let se = c.acceptance.std_error.hypot(w.estimate.std_error);
    assert!((c.acceptance.estimate - w.estimate.estimate).abs() < 3.0 * se);
}

#[test]
fn limit_test_on_exact_exponentials() {
    let q = p(1.0, 1.6, 0.2);
    let (u, n) = (10.0, 5_000);
    let (m1, m2) = (2.0 * 1.2, 2.0 * 1.2 / 1.6);
    let mut rng = SeedSpec::new(13, 0).rng();
    let samples: Vec<FptSample> = (0..n)
        .map(|_| {
            let e1: f64 = rng.sample(Exp1);
            let e2: f64 = rng.sample(Exp1);
            FptSample { tau1: 1.0 - m1 * e1 / (u * u), tau2: 1.0 - m2 * e2 / (u * u), both_by_one: true }
        })
        .filter(|s| s.tau1 >= 0.0 && s.tau2 >= 0.0)
        .collect();
    let rep = fpt_limit_test(&samples, u, &q).unwrap();
    let crit = 1.63 / (samples.len() as f64).sqrt();
    assert!(rep.ks1 < crit && rep.ks2 < crit, "{rep:?}");
    assert!((rep.limit_mean1 - m1).abs() < 1e-15 && (rep.limit_mean2 - m2).abs() < 1e-15);
    assert!(rep.correlation.abs() < 0.05 && rep.copula_distance < 0.05);
    assert!(fpt_limit_test(&[], u, &q).is_err());
}

#[test]
fn limit_distance_shrinks_with_the_level() {
    let g = Grid::uniform(256, 1.0).unwrap();
    let ks = |u: f64, seed: u64| {
        let c = conditional_fpt_sample(u, &bm(), &g, &g, 2_000, seed).unwrap();
        let rep = fpt_limit_test(&c.samples, u, &bm()).unwrap();
        assert_eq!((rep.limit_mean1, rep.limit_mean2), (2.0, 2.0));
        rep.ks1.max(rep.ks2)
    };
    let (lo, hi) = (ks(1.5, 14), ks(2.5, 15));
    assert!(hi < lo, "{hi} vs {lo}");
}

#[test]
fn independence_ratio_for_independent_brownian_motions() {
    let g = Grid::uniform(1024, 1.0).unwrap();
    let e = independence_ratio(2.0, &bm(), &g, 400_000, 16).unwrap();
    let oracle = discrete_brownian_tail(2.0, 1024);
    assert!((2.0 * norm_sf(2.0) - 0.0455).abs() < 1e-4);
    assert!(e.within(oracle, 4.0), "{e:?} vs {oracle}");
}

#[test]
fn independence_ratio_decreases() {
    let q = p(1.0, 1.0, 0.3);
    let g = Grid::uniform_window(128, 1.0, 0.125).unwrap();
    let mut last = 1.0;
    for u in [1.0, 1.5, 2.0, 2.5] {
        let e = independence_ratio(u, &q, &g, 100_000, 17).unwrap();
        assert!(e.estimate <= 1.0 && e.estimate < last, "u = {u}: {e:?}");
        last = e.estimate;
    }
}

#[test]
fn standard_errors_scale_with_replications() {
    let g = Grid::uniform(32, 1.0).unwrap();
    let spread = |n: u64| {
        let xs: Vec<f64> = (0..20).map(|k| joint_survival(1.0, &bm(), &g, n, 100 + k).unwrap().estimate).collect();
        let m = xs.iter().sum::<f64>() / xs.len() as f64;
        (xs.iter().map(|x| (x - m).powi(2)).sum::<f64>() / (xs.len() - 1) as f64).sqrt()
    };
    let a = joint_survival(1.0, &bm(), &g, 4_000, 1).unwrap();
    let b = joint_survival(1.0, &bm(), &g, 16_000, 1).unwrap();
    let r = a.std_error / b.std_error;
    assert!((r - 2.0).abs() < 0.2, "{r}");
    let e = spread(4_000) / spread(16_000);
    assert!(e > 1.3 && e < 3.0, "{e}");
    let p_hat = b.estimate;
    assert!((b.std_error - (p_hat * (1.0 - p_hat) / 16_000.0).sqrt()).abs() < 1e-15);
}

#[test]
fn bonferroni_examples() {
    let space = DiscreteSpace::new(vec![0.125; 8]).unwrap();
    // disjoint events make every correction term vanish
    let a = [0b0000_0011u64, 0b0000_1100];
    let b = [0b0000_0101u64, 0b1010_0000, 0b0000_1010];
    let res = bonferroni_check(&space, &a, &b).unwrap();
    assert!(res.holds);
    let full = space.full();
    let res = bonferroni_check(&space, &[full, full], &[full, full]).unwrap();
    assert_eq!((res.lhs, res.rhs), (1.0, 0.0));
    let res = bonferroni_check(&space, &[full; 3], &[full; 3]).unwrap();
    assert!((res.rhs - (9.0 - 9.0 - 9.0)).abs() < 1e-12);
    assert!(matches!(DiscreteSpace::new(vec![0.5, 0.4]), Err(Error::InvalidSpace(_))));
    assert!(bonferroni_check(&space, &[full], &[full, full]).is_err());
}

#[test]
fn bonferroni_equality_for_pairwise_disjoint_events() {
    let space = DiscreteSpace::new(vec![0.1, 0.2, 0.3, 0.15, 0.25]).unwrap();
    let a = [0b00011u64, 0b11100];
    let b = [0b01001u64, 0b10110];
    let res = bonferroni_check(&space, &a, &b).unwrap();
    assert!((res.lhs - res.rhs).abs() < 1e-15, "{res:?}");
}

#[test]
fn bonferroni_holds_on_random_spaces() {
    let mut rng = SeedSpec::new(18, 0).rng();
    for _ in 0..1000 {
        let k = rng.random_range(1..=16usize);
        let raw: Vec<f64> = (0..k).map(|_| rng.random::<f64>() + 1e-3).collect();
        let total: f64 = raw.iter().sum();
        let mut masses: Vec<f64> = raw.iter().map(|m| m / total).collect();
        let drift: f64 = 1.0 - masses.iter().sum::<f64>();
        masses[0] += drift;
        let space = DiscreteSpace::new(masses).unwrap();
        let events = |n: usize, rng: &mut rand_chacha::ChaCha8Rng| -> Vec<u64> { (0..n).map(|_| rng.random::<u64>() & space.full()).collect() };
        let n = rng.random_range(2..=4);
        let m = rng.random_range(2..=4);
        let a = events(n, &mut rng);
        let b = events(m, &mut rng);
        assert!(bonferroni_check(&space, &a, &b).unwrap().holds);
    }
}

#[test]
fn estimate_interval_contains_the_estimate() {
    let e = EstimateWithCI::from_count(37, 1_000, 0, 8);
    assert!(e.ci95.0 <= e.estimate && e.estimate <= e.ci95.1);
    assert!((e.estimate - 0.037).abs() < 1e-15);
}

proptest! {
    #![proptest_config(ProptestConfig::with_cases(16))]

    #[test]
    fn survival_is_monotone_in_the_threshold(mut us in prop::collection::vec(0.0f64..3.0, 2..6), seed in any::<u64>()) {
        us.sort_by(f64::total_cmp);
        let g = Grid::uniform(32, 1.0).unwrap();
        let c = joint_survival_grid(&us, &bm(), &g, &g, 2_000, seed).unwrap();
        for w in c.points.windows(2) {
            prop_assert!(w[1].grid.estimate <= w[0].grid.estimate);
        }
        for pt in &c.points {
            prop_assert!((0.0..=1.0).contains(&pt.grid.estimate));
            prop_assert!(pt.grid.ci95.0 <= pt.grid.estimate && pt.grid.estimate <= pt.grid.ci95.1);
        }
    }

    #[test]
    fn ratio_never_exceeds_one(u in 0.0f64..2.5, seed in any::<u64>()) {
        let g = Grid::uniform(32, 1.0).unwrap();
        let e = independence_ratio(u, &bm(), &g, 2_000, seed).unwrap();
        prop_assert!(e.estimate <= 1.0 && e.estimate >= 0.0);
    }
}
