use nalgebra::{DMatrix, DVector};
use proptest::prelude::*;
use rand::{Rng, SeedableRng};
use rand_chacha::ChaCha8Rng;

use radiomap::estimator::{likelihood_matrix, objective_f, solve_theta};
use radiomap::synthdata::{generate, reference_theta, EnvironmentSpec};
use radiomap::{
    deterministic_gain, fit, Dataset, Error, FitConfig, GridSpec, Link, Measurement, ObstacleMap,
    PathLossParams, SoftFilter,
};

fn grid3() -> GridSpec {
    GridSpec::new(0.0, 0.0, 10.0, 3, 3, 50.0).unwrap()
}

fn random_link(rng: &mut ChaCha8Rng, side: f64) -> Link {
    Link::from_coords([
        rng.random_range(0.0..side),
        rng.random_range(0.0..side),
        1.5,
        rng.random_range(0.0..side),
        rng.random_range(0.0..side),
        rng.random_range(20.0..90.0),
    ])
}

fn noiseless(truth: &ObstacleMap, theta: &PathLossParams, n: usize, seed: u64) -> Dataset {
    let mut rng = ChaCha8Rng::seed_from_u64(seed);
    let side = truth.grid().width();
    let recs = (0..n)
        .map(|_| {
            let link = random_link(&mut rng, side);
            let g = deterministic_gain(&link, theta, truth, &SoftFilter::point()).unwrap();
            Measurement { link, rss_db: g }
        })
        .collect();
    Dataset::new(recs).unwrap()
}

fn one_obstacle() -> ObstacleMap {
    let mut h = ObstacleMap::empty(grid3(), 1);
    h.set(4, 1, 30.0);
    h
}

#[test]
fn noiseless_single_obstacle_fits_to_zero() {
    let truth = one_obstacle();
    let theta = reference_theta(1);
    let data = noiseless(&truth, &theta, 300, 1);
    let res = fit(&data, truth.grid(), &SoftFilter::point(), &FitConfig::default()).unwrap();
    let f = objective_f(&data, &res.theta, &res.obstacles, &SoftFilter::point());
    assert!(f < 1e-6, "objective {f}");
    assert!(res.obstacles.dominates(&truth), "{:?}", res.obstacles.heights());
}

#[test]
fn too_few_records_is_a_precondition_error() {
    let data = noiseless(&one_obstacle(), &reference_theta(1), 3, 2);
    let err = fit(&data, &grid3(), &SoftFilter::point(), &FitConfig::default()).unwrap_err();
    assert!(matches!(err, Error::Precondition(_)), "{err}");
}

#[test]
fn objective_trace_never_increases() {
    let truth = one_obstacle();
    let theta = reference_theta(1);
    let data = noiseless(&truth, &theta, 300, 3);
    let cfg = FitConfig {
        freeze_theta: true,
        theta_init: Some(theta),
        ..FitConfig::default()
    };
    let res = fit(&data, truth.grid(), &SoftFilter::point(), &cfg).unwrap();
    for w in res.objective_trace.windows(2) {
        assert!(w[1] <= w[0] + 1e-12, "{:?}", res.objective_trace);
    }

    // noisy desk data with the soft filter, parameters re-solved each sweep
    let mut spec = EnvironmentSpec::desk_scale(4, 1, 5);
    spec.n_links = 600;
    let sc = generate(&spec).unwrap();
    let filter = radiomap::FilterSpec::cross(4.5, 4.5).build().unwrap();
    let res = fit(&sc.train, &spec.grid, &filter, &FitConfig::default()).unwrap();
    for w in res.objective_trace.windows(2) {
        assert!(w[1] <= w[0] + 1e-9, "{:?}", res.objective_trace);
    }
}

#[test]
fn fit_is_bit_reproducible() {
    let mut spec = EnvironmentSpec::desk_scale(9, 2, 5);
    spec.n_links = 500;
    let sc = generate(&spec).unwrap();
    let cfg = FitConfig::with_classes(2);
    let a = fit(&sc.train, &spec.grid, &SoftFilter::point(), &cfg).unwrap();
    let b = fit(&sc.train, &spec.grid, &SoftFilter::point(), &cfg).unwrap();
    assert_eq!(a, b);
}

/// Least squares through the SVD of the explicit design matrix.
fn svd_oracle(data: &Dataset, s: &[Vec<f64>]) -> Vec<f64> {
    let n = data.len();
    let classes = s[0].len();
    let x = DMatrix::from_fn(n, 2 * classes, |i, c| {
        let d = data.log_distances()[i];
        let k = c / 2;
        if c % 2 == 0 { s[i][k] * d } else { s[i][k] }
    });
    let y = DVector::from_vec(data.ys());
    x.svd(true, true).solve(&y, 1e-12).unwrap().as_slice().to_vec()
}

#[test]
fn theta_solve_matches_svd_oracle() {
    let mut rng = ChaCha8Rng::seed_from_u64(5);
    let truth = one_obstacle();
    let data = noiseless(&truth, &reference_theta(1), 200, 6);
    // noisy targets, soft likelihood rows
    let recs = data
        .records()
        .iter()
        .map(|r| Measurement { link: r.link, rss_db: r.rss_db + rng.random_range(-3.0..3.0) })
        .collect();
    let data = Dataset::new(recs).unwrap();
    let filter = radiomap::FilterSpec::cross(5.0, 5.0).build().unwrap();
    let s = likelihood_matrix(&data, &truth, &filter);
    let got = solve_theta(&data, &s, 0.0).unwrap();
    for (g, o) in got.as_slice().iter().zip(svd_oracle(&data, &s)) {
        assert!((g - o).abs() < 1e-6, "{g} vs {o}");
    }
}

proptest! {
    #![proptest_config(ProptestConfig::with_cases(32))]

    #[test]
    fn theta_solve_recovers_exact_parameters(
        a0 in -40.0..-10.0f64, b0 in -60.0..0.0f64,
        a1 in -50.0..-20.0f64, b1 in -60.0..0.0f64,
        seed in 0u64..1000,
    ) {
        let theta = PathLossParams::from_pairs(&[(a0, b0), (a1, b1)]);
        let data = noiseless(&one_obstacle(), &theta, 120, seed);
        let s = likelihood_matrix(&data, &one_obstacle(), &SoftFilter::point());
        prop_assume!(s.iter().filter(|r| r[0] > 0.5).count() >= 3 && s.iter().filter(|r| r[1] > 0.5).count() >= 3);
        let got = solve_theta(&data, &s, 0.0).unwrap();
        for (g, t) in got.as_slice().iter().zip(theta.as_slice()) {
            prop_assert!((g - t).abs() < 1e-6, "{} vs {}", g, t);
        }
    }
}
