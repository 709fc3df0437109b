use proptest::prelude::*;
use rand::{Rng, SeedableRng};
use rand_chacha::ChaCha8Rng;

use radiomap::kriging::{extract_residuals, krige_weights};
use radiomap::synthdata::{generate, EnvironmentSpec};
use radiomap::{build_radio_map, krige, full_gain, Link, MapConfig, ResidualStore, Variogram};

fn random_links(n: usize, rng: &mut ChaCha8Rng) -> Vec<Link> {
    (0..n)
        .map(|_| {
            Link::from_coords([
                rng.random_range(0.0..100.0),
                rng.random_range(0.0..100.0),
                1.5,
                rng.random_range(0.0..100.0),
                rng.random_range(0.0..100.0),
                rng.random_range(20.0..90.0),
            ])
        })
        .collect()
}

/// Ordinary kriging over every stored record, solved by Gauss-Jordan
/// elimination on the bordered system.
fn oracle(p: &Link, links: &[Link], vals: &[f64], vg: &Variogram) -> f64 {
    let n = links.len();
    let mut a = vec![vec![0.0; n + 2]; n + 1];
    for i in 0..n {
        for j in 0..n {
            a[i][j] = if i == j { -vg.sigma_n2 } else { vg.value(links[i].distance_6d(&links[j])) };
        }
        a[i][n] = 1.0;
        a[n][i] = 1.0;
        a[i][n + 1] = vg.value(links[i].distance_6d(p));
    }
    a[n][n + 1] = 1.0;
    for c in 0..=n {
        let piv = (c..=n).max_by(|&x, &y| a[x][c].abs().total_cmp(&a[y][c].abs())).unwrap();
        a.swap(c, piv);
        for r in 0..=n {
            if r != c {
                let f = a[r][c] / a[c][c];
                for k in c..n + 2 {
                    a[r][k] -= f * a[c][k];
                }
            }
        }
    }
    (0..n).map(|i| a[i][n + 1] / a[i][i] * vals[i]).sum()
}

proptest! {
    #![proptest_config(ProptestConfig::with_cases(64))]

    #[test]
    fn matches_full_system_oracle(seed in 0u64..10_000, n in 2usize..=10, nugget in 0.0..3.0f64) {
        let mut rng = ChaCha8Rng::seed_from_u64(seed);
        let links = random_links(n, &mut rng);
        let vals: Vec<f64> = (0..n).map(|_| rng.random_range(-8.0..8.0)).collect();
        let store = ResidualStore::new(&links, vals.clone()).unwrap();
        let vg = Variogram::new(rng.random_range(1.0..5.0), rng.random_range(10.0..100.0), nugget).unwrap();
        let q = random_links(1, &mut rng)[0];
        let got = krige(&q, &store, &vg, 64);
        let want = oracle(&q, &links, &vals, &vg);
        prop_assert!((got - want).abs() < 1e-6, "{} vs {}", got, want);
    }

    #[test]
    fn weights_sum_to_one_and_constants_are_reproduced(seed in 0u64..10_000, c in -20.0..20.0f64) {
        let mut rng = ChaCha8Rng::seed_from_u64(seed);
        let links = random_links(30, &mut rng);
        let store = ResidualStore::new(&links, vec![c; 30]).unwrap();
        let vg = Variogram::new(3.0, 40.0, 0.5).unwrap();
        let q = random_links(1, &mut rng)[0];
        let (_, w) = krige_weights(&q, &store, &vg, 8);
        prop_assert!((w.iter().sum::<f64>() - 1.0).abs() < 1e-9);
        prop_assert!((krige(&q, &store, &vg, 8) - c).abs() < 1e-9);
    }

    #[test]
    fn zero_nugget_is_exact_at_training_links(seed in 0u64..10_000) {
        let mut rng = ChaCha8Rng::seed_from_u64(seed);
        let links = random_links(40, &mut rng);
        let vals: Vec<f64> = (0..40).map(|_| rng.random_range(-8.0..8.0)).collect();
        let store = ResidualStore::new(&links, vals.clone()).unwrap();
        let vg = Variogram::new(3.0, 40.0, 0.0).unwrap();
        for (l, v) in links.iter().zip(&vals) {
            prop_assert!((krige(l, &store, &vg, 16) - v).abs() <= 1e-9);
        }
    }
}

#[test]
fn fitted_map_residuals_reconstruct_training_rss() {
    let mut spec = EnvironmentSpec::desk_scale(3, 1, 5);
    spec.n_links = 400;
    let sc = generate(&spec).unwrap();
    let (map, _) = build_radio_map(&sc.train, &MapConfig::new(spec.grid, 1)).unwrap();
    let store = extract_residuals(&sc.train, &map).unwrap();
    for (r, e) in sc.train.records().iter().zip(store.values()) {
        let g = map.deterministic_gain(&r.link).unwrap();
        assert!((g + e - r.rss_db).abs() < 1e-9);
    }
    // kriging shrinks training error relative to the deterministic part
    let det: f64 = sc.train.records().iter().map(|r| (map.deterministic_gain(&r.link).unwrap() - r.rss_db).abs()).sum();
    let full: f64 = sc.train.records().iter().map(|r| (full_gain(&r.link, &map).unwrap() - r.rss_db).abs()).sum();
    assert!(full < det, "{full} vs {det}");
}
