use mixdist::measures::{canonicalize, AtomicMeasure};
use mixdist::transport::{got_w1, w1, w1_quantile, GotConfig};
use proptest::prelude::*;

const THETA_STAR: f64 = 4.0;

fn measure() -> impl Strategy<Value = AtomicMeasure> {
    prop::collection::vec((0.0..=THETA_STAR, 0.05f64..1.0), 1..5).prop_map(|atoms| {
        let s: f64 = atoms.iter().map(|a| a.1).sum();
        canonicalize(
            THETA_STAR,
            atoms.into_iter().map(|(l, w)| (l, w / s)),
            0.0,
            0.0,
        )
        .unwrap()
    })
}

proptest! {
    #![proptest_config(ProptestConfig::with_cases(64))]

    #[test]
    fn smoothed_distance_is_a_metric(a in measure(), b in measure(), c in measure(), sigma in 0.3f64..3.0) {
        let cfg = GotConfig::new(sigma).unwrap();
        let tol = cfg.quad_tol;
        let ab = got_w1(&a, &b, &cfg).unwrap();
        let ba = got_w1(&b, &a, &cfg).unwrap();
        let bc = got_w1(&b, &c, &cfg).unwrap();
        let ac = got_w1(&a, &c, &cfg).unwrap();
        prop_assert!((ab - ba).abs() <= 2.0 * tol);
        prop_assert!(ac <= ab + bc + 4.0 * tol);
        prop_assert!(got_w1(&a, &a, &cfg).unwrap().abs() <= tol);
    }

    #[test]
    fn smoothing_never_increases_the_distance(a in measure(), b in measure(), s1 in 0.2f64..2.0, extra in 0.1f64..2.0) {
        let tol = GotConfig::new(1.0).unwrap().quad_tol;
        let d1 = got_w1(&a, &b, &GotConfig::new(s1).unwrap()).unwrap();
        let d2 = got_w1(&a, &b, &GotConfig::new(s1 + extra).unwrap()).unwrap();
        prop_assert!(d2 <= d1 + tol);
        prop_assert!(d1 <= w1(&a, &b) + tol);
    }

    #[test]
    fn cdf_area_and_quantile_coupling_agree(a in measure(), b in measure()) {
        prop_assert!((w1(&a, &b) - w1_quantile(&a, &b)).abs() <= 1e-12);
        prop_assert!(w1(&a, &b) <= THETA_STAR);
    }
}

#[test]
fn point_masses() {
    for (x, y) in [(0.0, 4.0), (1.25, 3.5), (2.0, 2.0)] {
        let a = AtomicMeasure::point_mass(THETA_STAR, x).unwrap();
        let b = AtomicMeasure::point_mass(THETA_STAR, y).unwrap();
        assert_eq!(w1(&a, &b), (x - y).abs());
        let g = got_w1(&a, &b, &GotConfig::new(0.7).unwrap()).unwrap();
        assert!((g - (x - y).abs()).abs() <= 1e-6);
    }
}
