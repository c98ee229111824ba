//! Properties of the cosine-softmax common-feature update.

use diffgad::common::{compute_weights, init_common, CommonFeature};
use diffgad::nn::Matrix;
use proptest::prelude::*;
use proptest::test_runner::RngSeed;

fn config() -> ProptestConfig {
    ProptestConfig {
        cases: 1000,
        rng_seed: RngSeed::Fixed(0xc0),
        failure_persistence: None,
        ..ProptestConfig::default()
    }
}

fn rows(n: std::ops::Range<usize>, k: std::ops::Range<usize>) -> impl Strategy<Value = Matrix> {
    (n, k).prop_flat_map(|(n, k)| {
        proptest::collection::vec(-5.0f64..5.0, n * k).prop_map(move |v| Matrix::from_vec(n, k, v).unwrap())
    })
}

#[test]
fn two_node_example() {
    let z = Matrix::from_rows(&[[1.0, 0.0], [0.0, 1.0]]);
    let w = compute_weights(&z, &[1.0, 0.0], 1.0).unwrap();
    assert!((w.omega[0] - 0.7311).abs() < 1e-4);
    assert!((w.omega[1] - 0.2689).abs() < 1e-4);
    let e = std::f64::consts::E;
    assert!((w.omega[0] - e / (e + 1.0)).abs() < 1e-12);
}

proptest! {
    #![proptest_config(config())]

    #[test]
    fn update_stays_in_convex_hull(z in rows(1..12, 1..6), tau in 0.05f64..5.0) {
        let mut cf = init_common(&z, tau).unwrap();
        prop_assume!(cf.c().iter().any(|&x| x != 0.0));
        let w = cf.update(&z).unwrap();
        prop_assert!((w.omega.iter().sum::<f64>() - 1.0).abs() < 1e-12);
        prop_assert!(w.omega.iter().all(|&x| x >= 0.0));
        for j in 0..z.cols() {
            let col: Vec<f64> = z.iter_rows().map(|r| r[j]).collect();
            let lo = col.iter().copied().fold(f64::INFINITY, f64::min);
            let hi = col.iter().copied().fold(f64::NEG_INFINITY, f64::max);
            let c = cf.c()[j];
            prop_assert!(c >= lo - 1e-12 && c <= hi + 1e-12, "c[{j}] = {c} outside [{lo}, {hi}]");
            let direct: f64 = col.iter().zip(&w.omega).map(|(x, o)| x * o).sum();
            prop_assert!((c - direct).abs() < 1e-12);
        }
        prop_assert_eq!(cf.history().len(), 2);
    }

    #[test]
    fn outlier_pointing_away_is_down_weighted(
        dir in proptest::collection::vec(-1.0f64..1.0, 2..6),
        noise in proptest::collection::vec(-0.2f64..0.2, 60),
        inliers in 3usize..10,
        scale in 0.5f64..3.0,
        tau in 0.1f64..2.0,
    ) {
        let k = dir.len();
        let norm = dir.iter().map(|x| x * x).sum::<f64>().sqrt();
        prop_assume!(norm > 0.3);
        let unit: Vec<f64> = dir.iter().map(|x| x / norm).collect();
        let mut data = Vec::new();
        for i in 0..inliers {
            data.extend(unit.iter().enumerate().map(|(j, u)| scale * (u + noise[(i * k + j) % noise.len()])));
        }
        // the outlier points opposite the bulk
        data.extend(unit.iter().map(|u| -scale * u));
        let z = Matrix::from_vec(inliers + 1, k, data).unwrap();
        let cf = init_common(&z, tau).unwrap();
        let w = compute_weights(&z, cf.c(), tau).unwrap();
        let out = w.omega[inliers];
        let min_inlier = w.omega[..inliers].iter().copied().fold(f64::INFINITY, f64::min);
        prop_assert!(out < min_inlier, "outlier weight {out} not below inliers {min_inlier}");
        prop_assert!(out < 1.0 / (inliers + 1) as f64);
    }

    #[test]
    fn weights_ignore_row_scale(z in rows(1..10, 1..5), scales in proptest::collection::vec(0.01f64..100.0, 10), tau in 0.1f64..3.0) {
        let c: Vec<f64> = z.col_means();
        prop_assume!(c.iter().any(|&x| x != 0.0));
        let scaled = Matrix::from_fn(z.rows(), z.cols(), |i, j| z.get(i, j) * scales[i]);
        let a = compute_weights(&z, &c, tau).unwrap();
        let b = compute_weights(&scaled, &c, tau).unwrap();
        for (x, y) in a.omega.iter().zip(&b.omega) {
            prop_assert!((x - y).abs() < 1e-9);
        }
        let c2: Vec<f64> = c.iter().map(|x| x * 7.5).collect();
        let d = compute_weights(&z, &c2, tau).unwrap();
        for (x, y) in a.omega.iter().zip(&d.omega) {
            prop_assert!((x - y).abs() < 1e-9);
        }
    }
}

#[test]
fn frozen_feature_rejects_updates() {
    let z = Matrix::from_rows(&[[1.0, 2.0], [3.0, 4.0]]);
    let mut cf = CommonFeature::from_parts(vec![1.0, 1.0], 1.0, vec![], false).unwrap();
    cf.update(&z).unwrap();
    cf.freeze();
    let before = cf.clone();
    assert!(cf.update(&z).is_err());
    assert_eq!(cf, before);
}
