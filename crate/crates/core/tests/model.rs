use corrfbm::model::max_feasible_correlation;
use corrfbm::{build_joint_covariance, cross_covariance, fbm_covariance, Error, Grid, ModelParams};
use nalgebra::SymmetricEigen;
use proptest::prelude::*;

fn params(a1: f64, a2: f64, r: f64) -> ModelParams {
    ModelParams::new(a1, a2, r).unwrap()
}

#[test]
fn covariance_examples() {
    assert_eq!(fbm_covariance(1.0, 1.0, 1.0).unwrap(), 1.0);
    assert_eq!(fbm_covariance(0.0, 1.0, 1.5).unwrap(), 0.0);
    assert_eq!(fbm_covariance(0.5, 1.0, 1.0).unwrap(), 0.5);
    for a in [0.3, 1.0, 1.7] {
        assert_eq!(cross_covariance(1.0, 1.0, &params(a, 2.0 - a, 0.5)), 0.5);
        assert_eq!(cross_covariance(0.0, 1.0, &params(a, a, 0.5)), 0.0);
    }
    let c = cross_covariance(0.25, 1.0, &params(1.0, 1.5, 0.4));
    assert!((c - 0.2).abs() < 1e-15);
}

#[test]
fn invalid_inputs_are_rejected() {
    assert!(matches!(ModelParams::new(1.0, 1.0, 1.0), Err(Error::Domain(_))));
    assert!(matches!(ModelParams::new(1.0, 1.0, -1.0), Err(Error::Domain(_))));
    assert!(ModelParams::new(0.0, 1.0, 0.0).is_err());
    assert!(ModelParams::new(1.0, 2.0, 0.0).is_err());
    assert!(ModelParams::new(f64::NAN, 1.0, 0.0).is_err());
    assert!(fbm_covariance(-0.1, 1.0, 1.0).is_err());
    assert!(Grid::new(vec![0.5]).is_err());
    assert!(Grid::new(vec![0.5, 0.5]).is_err());
    assert!(Grid::new(vec![0.5, 0.25]).is_err());
    assert!(Grid::new(vec![-0.5, 1.0]).is_err());
    assert!(Grid::new(vec![0.5, f64::INFINITY]).is_err());
}

#[test]
fn deserialized_params_are_validated() {
    let ok: ModelParams = serde_json::from_str(r#"{"alpha1":1.0,"alpha2":0.5,"r":-0.2}"#).unwrap();
    assert_eq!(ok, params(1.0, 0.5, -0.2));
    assert!(serde_json::from_str::<ModelParams>(r#"{"alpha1":1.0,"alpha2":0.5,"r":1.5}"#).is_err());
    assert!(serde_json::from_str::<ModelParams>(r#"{"alpha1":2.5,"alpha2":0.5,"r":0.0}"#).is_err());
}

#[test]
fn independent_brownian_blocks() {
    let g = Grid::new(vec![0.5, 1.0]).unwrap();
    let c = build_joint_covariance(&g, &g, &params(1.0, 1.0, 0.0)).unwrap();
    let want = [[0.5, 0.5, 0.0, 0.0], [0.5, 1.0, 0.0, 0.0], [0.0, 0.0, 0.5, 0.5], [0.0, 0.0, 0.5, 1.0]];
    for (i, row) in want.iter().enumerate() {
        for (j, v) in row.iter().enumerate() {
            assert_eq!(c.matrix()[(i, j)], *v);
        }
    }
    assert_eq!(c.jitter(), 0.0);
}

#[test]
fn high_correlation_is_feasible_only_near_the_endpoint() {
    let p = params(1.0, 1.0, 0.9);
    let point = Grid::lattice_segment(1.0, 1, 1).unwrap();
    assert!(build_joint_covariance(&point, &point, &p).is_ok());
    let near_one = Grid::uniform_window(64, 1.0, 0.9).unwrap();
    assert!(build_joint_covariance(&near_one, &near_one, &p).is_ok());
    let full = Grid::uniform(64, 1.0).unwrap();
    assert!(matches!(build_joint_covariance(&full, &full, &p), Err(Error::NotPositiveSemiDefinite { .. })));
    // even the two-point grid {1/2, 1} caps |r| at about 0.854
    let two = Grid::new(vec![0.5, 1.0]).unwrap();
    let cap = max_feasible_correlation(&two, &two, 1.0, 1.0).unwrap();
    let q = 1.0 + (1.0 - 0.5f64.sqrt()).powi(2) / 0.5;
    assert!((cap - 1.0 / q).abs() < 1e-12, "{cap}");
}

#[test]
fn feasibility_shrinks_as_grids_refine() {
    let mut last = f64::INFINITY;
    for n in [8, 32, 128, 512] {
        let g = Grid::uniform(n, 1.0).unwrap();
        let cap = max_feasible_correlation(&g, &g, 1.0, 1.0).unwrap();
        assert!(cap < last && cap > 0.0);
        last = cap;
    }
    let g = Grid::uniform(128, 1.0).unwrap();
    assert!(build_joint_covariance(&g, &g, &params(1.0, 1.8, 0.99)).is_err());
}

#[test]
fn psd_check_agrees_with_feasibility_threshold() {
    let g = Grid::uniform_window(32, 1.0, 0.25).unwrap();
    for (a1, a2) in [(1.0, 1.0), (0.6, 1.4), (1.2, 1.8)] {
        let cap = max_feasible_correlation(&g, &g, a1, a2).unwrap();
        assert!(build_joint_covariance(&g, &g, &params(a1, a2, 0.97 * cap)).is_ok());
        if 1.03 * cap < 1.0 {
            assert!(build_joint_covariance(&g, &g, &params(a1, a2, 1.03 * cap)).is_err());
        }
    }
}

#[test]
fn cache_round_trip() {
    let g1 = Grid::uniform_window(12, 1.0, 0.25).unwrap();
    let g2 = Grid::new(vec![0.3, 0.6, 1.0]).unwrap();
    let c = build_joint_covariance(&g1, &g2, &params(0.7, 1.3, -0.3)).unwrap();
    let dir = tempfile::tempdir().unwrap();
    let path = dir.path().join("cov.bin");
    c.save(&path).unwrap();
    let back = corrfbm::JointCovariance::load(&path).unwrap();
    assert_eq!(back.matrix(), c.matrix());
    assert_eq!(back.factor(), c.factor());
    assert_eq!(back.params(), c.params());
    assert_eq!(back.grid2().points(), g2.points());
    std::fs::write(&path, b"garbage").unwrap();
    assert!(corrfbm::JointCovariance::load(&path).is_err());
}

fn grid_strategy() -> impl Strategy<Value = Grid> {
    (2usize..24, 0.0f64..0.5).prop_map(|(n, t_min)| Grid::uniform_window(2 * n, 1.0, t_min).unwrap())
}

proptest! {
    #![proptest_config(ProptestConfig::with_cases(48))]

    #[test]
    fn factor_reproduces_matrix(a1 in 0.2f64..1.9, a2 in 0.2f64..1.9, frac in -0.95f64..0.95, g1 in grid_strategy(), g2 in grid_strategy()) {
        let cap = max_feasible_correlation(&g1, &g2, a1, a2).unwrap().min(0.999);
        let p = params(a1, a2, frac * cap);
        let c = build_joint_covariance(&g1, &g2, &p).unwrap();
        let m = c.matrix();
        let l = c.factor();
        let err = (l * l.transpose() - m).amax();
        prop_assert!(err <= 1e-8 * m.amax(), "err {err}");
        prop_assert!((m - m.transpose()).amax() <= 1e-12 * m.amax());
        for (i, &s) in g1.points().iter().enumerate() {
            prop_assert!((m[(i, i)] - s.powf(a1)).abs() < 1e-14);
        }
        for (j, &t) in g2.points().iter().enumerate() {
            let k = g1.len() + j;
            prop_assert!((m[(k, k)] - t.powf(a2)).abs() < 1e-14);
        }
    }

    #[test]
    fn zero_correlation_has_zero_cross_block(a1 in 0.2f64..1.9, a2 in 0.2f64..1.9, g1 in grid_strategy(), g2 in grid_strategy()) {
        let c = build_joint_covariance(&g1, &g2, &params(a1, a2, 0.0)).unwrap();
        for i in 0..g1.len() {
            for j in 0..g2.len() {
                prop_assert_eq!(c.matrix()[(i, g1.len() + j)], 0.0);
            }
        }
    }

    #[test]
    fn swapping_coordinates_keeps_the_spectrum(a1 in 0.3f64..1.8, a2 in 0.3f64..1.8, frac in -0.9f64..0.9, g1 in grid_strategy(), g2 in grid_strategy()) {
        let cap = max_feasible_correlation(&g1, &g2, a1, a2).unwrap().min(0.999);
        let r = frac * cap;
        let c = build_joint_covariance(&g1, &g2, &params(a1, a2, r)).unwrap();
        let d = build_joint_covariance(&g2, &g1, &params(a2, a1, r)).unwrap();
        let (n1, n2) = (g1.len(), g2.len());
        for i in 0..n1 {
            for j in 0..n2 {
                prop_assert!((c.matrix()[(i, n1 + j)] - d.matrix()[(j, n2 + i)]).abs() <= 1e-15);
            }
        }
        let mut e1: Vec<f64> = SymmetricEigen::new(c.matrix().clone()).eigenvalues.iter().copied().collect();
        let mut e2: Vec<f64> = SymmetricEigen::new(d.matrix().clone()).eigenvalues.iter().copied().collect();
        e1.sort_by(f64::total_cmp);
        e2.sort_by(f64::total_cmp);
        for (x, y) in e1.iter().zip(&e2) {
            prop_assert!((x - y).abs() <= 1e-10 * c.matrix().amax());
        }
    }

    #[test]
    fn variance_on_the_diagonal(t in 0.0f64..=1.0, a in 0.01f64..1.99) {
        prop_assert!((fbm_covariance(t, t, a).unwrap() - t.powf(a)).abs() <= 1e-15);
    }

    #[test]
    fn covariance_is_symmetric(s in 0.0f64..=1.0, t in 0.0f64..=1.0, a in 0.01f64..1.99) {
        prop_assert_eq!(fbm_covariance(s, t, a).unwrap(), fbm_covariance(t, s, a).unwrap());
    }
}
