use mixdist::experiments::{
    chi2_study, rate_study, replication_rng, sample_mixture, Chi2Study, RateStudy, StudyConfig,
};
use mixdist::kernels::KernelSpec;
use mixdist::measures::AtomicMeasure;
use mixdist::solver::{Method, SolverConfig};
use rand::Rng;

fn small_rate_study(seed: u64) -> RateStudy {
    RateStudy {
        kernel: KernelSpec::poisson(2.0).unwrap(),
        truth: AtomicMeasure::new(2.0, vec![(0.5, 0.4), (1.5, 0.6)]).unwrap(),
        method: Method::Isdm,
        solver: SolverConfig::default(),
        n_grid: vec![50, 200, 800],
        reps: 8,
        sigma: 1.5,
        seed,
    }
}

fn csv(f: impl FnOnce(&mut Vec<u8>)) -> Vec<u8> {
    let mut v = Vec::new();
    f(&mut v);
    v
}

#[test]
fn rate_study_is_reproducible_and_pathwise_ordered() {
    let a = rate_study(&small_rate_study(3)).unwrap();
    let b = rayon::ThreadPoolBuilder::new()
        .num_threads(1)
        .build()
        .unwrap()
        .install(|| rate_study(&small_rate_study(3)).unwrap());
    assert_eq!(
        csv(|w| a.write_csv(w).unwrap()),
        csv(|w| b.write_csv(w).unwrap())
    );
    assert_eq!(
        csv(|w| a.write_replications_csv(w).unwrap()),
        csv(|w| b.write_replications_csv(w).unwrap())
    );
    assert_eq!(a.pathwise_violations, 0);
    for r in &a.replications {
        assert!(r.got_w1 <= r.w1 + 1e-8 && r.w1 <= 2.0);
    }
    let c = rate_study(&small_rate_study(4)).unwrap();
    assert_ne!(a.replications, c.replications);
}

#[test]
fn rate_csv_header() {
    let a = rate_study(&small_rate_study(1)).unwrap();
    let text = String::from_utf8(csv(|w| a.write_csv(w).unwrap())).unwrap();
    assert_eq!(
        text.lines().next().unwrap(),
        "n,reps,failures,uncertified,mean_got_w1,stderr_got_w1,mean_w1,stderr_w1"
    );
    assert_eq!(text.lines().count(), 4);
}

#[test]
fn chi2_study_is_reproducible() {
    let study = Chi2Study {
        kernel: KernelSpec::poisson(1.0).unwrap(),
        truth: AtomicMeasure::point_mass(1.0, 1.0).unwrap(),
        n_grid: vec![100, 400],
        reps: 60,
        delta: 0.1,
        seed: 11,
    };
    let a = chi2_study(&study).unwrap();
    let b = chi2_study(&study).unwrap();
    assert_eq!(
        csv(|w| a.write_csv(w).unwrap()),
        csv(|w| b.write_csv(w).unwrap())
    );
    assert!(a.rows[0].under_bound);
    assert_eq!(a.rows[0].quantile, a.rows[0].bound);
}

#[test]
fn replication_streams_are_independent_of_order() {
    let mut forward: Vec<u64> = Vec::new();
    for r in 0..5 {
        forward.push(replication_rng(9, 100, r).random());
    }
    let mut backward: Vec<u64> = Vec::new();
    for r in (0..5).rev() {
        backward.push(replication_rng(9, 100, r).random());
    }
    backward.reverse();
    assert_eq!(forward, backward);
}

#[test]
fn sampled_frequencies_approach_the_mixture() {
    let k = KernelSpec::geometric(0.7).unwrap();
    let q = AtomicMeasure::new(0.7, vec![(0.2, 0.5), (0.6, 0.5)]).unwrap();
    let s = sample_mixture(&k, &q, 200_000, 5).unwrap();
    for x in 0..4u64 {
        let freq = s.iter().filter(|&&v| v == x).count() as f64 / s.len() as f64;
        let p = k.mixture_pmf(&q, x).unwrap();
        // Five binomial standard deviations.
        assert!(
            (freq - p).abs() <= 5.0 * (p * (1.0 - p) / s.len() as f64).sqrt(),
            "x={x}"
        );
    }
}

#[test]
fn config_file_round_trip() {
    let cfg = StudyConfig::from_json(
        r#"{"kernel":"poisson","theta_star":1,"sigma":2,"method":"vdm","n_grid":[100,1000],"reps":5,"seed":42,
            "truth":[[0.3,0.5],[0.8,0.5]]}"#,
    )
    .unwrap();
    let study = cfg.rate_study().unwrap();
    assert_eq!(study.n_grid, vec![100, 1000]);
    assert_eq!(study.truth.pairs(), vec![(0.3, 0.5), (0.8, 0.5)]);
    assert!(StudyConfig::from_json(
        r#"{"kernel":"poisson","theta_star":1,"n_grid":[10],"bogus":1}"#
    )
    .is_err());
}
