use edwait_core::baselines::{fit_knn, fit_lasso_path, fit_qreg, lambda_max, pinball_objective, QregModel};
use proptest::prelude::*;

fn scan_minimum(y: &[f64], tau: f64) -> f64 {
    y.iter().map(|&c| pinball_objective(y.iter().map(|v| v - c), tau)).fold(f64::INFINITY, f64::min)
}

proptest! {
    #![proptest_config(ProptestConfig::with_cases(40))]

    #[test]
    fn intercept_only_fit_reaches_the_scan_minimum(
        y in prop::collection::vec(0.0f64..500.0, 1..80),
        tau in 0.05f64..0.95,
    ) {
        let f = fit_qreg(&[], y.len(), 0, &y, tau).unwrap();
        let best = scan_minimum(&y, tau);
        prop_assert!(f.objective - best <= 1e-6 * best.max(1.0), "{} vs {}", f.objective, best);
    }

    #[test]
    fn knn_neighbours_ignore_row_order(
        rows in prop::collection::vec((0u8..4, 0u8..4, 0.0f64..100.0), 3..40),
        q in (0u8..4, 0u8..4),
        k in 1usize..6,
        rot in 0usize..40,
    ) {
        let n = rows.len();
        let x: Vec<f64> = rows.iter().flat_map(|r| [f64::from(r.0), f64::from(r.1)]).collect();
        let y: Vec<f64> = rows.iter().map(|r| r.2).collect();
        let keys: Vec<(i64, u64)> = (0..n).map(|i| ((i / 2) as i64, i as u64)).collect();
        let a = fit_knn(&x, n, &[1, 2], &y, &keys, k).unwrap();
        // Same data presented in a rotated order.
        let order: Vec<usize> = (0..n).map(|i| (i + rot) % n).collect();
        let x2: Vec<f64> = order.iter().flat_map(|&i| [x[2 * i], x[2 * i + 1]]).collect();
        let y2: Vec<f64> = order.iter().map(|&i| y[i]).collect();
        let keys2: Vec<(i64, u64)> = order.iter().map(|&i| keys[i]).collect();
        let b = fit_knn(&x2, n, &[1, 2], &y2, &keys2, k).unwrap();
        let query = [f64::from(q.0), f64::from(q.1)];
        let ids_a: Vec<u64> = a.neighbors(&query, k).unwrap().into_iter().map(|i| keys[i].1).collect();
        let ids_b: Vec<u64> = b.neighbors(&query, k).unwrap().into_iter().map(|i| keys2[i].1).collect();
        prop_assert_eq!(ids_a, ids_b);
        prop_assert_eq!(a.forecast(&query).unwrap(), b.forecast(&query).unwrap());
    }

    #[test]
    fn lasso_path_shrinks_and_vanishes(seed in any::<u64>()) {
        use rand::Rng;
        let mut rng = edwait_core::seed::rng(seed);
        let (n, m) = (40, 5);
        let x: Vec<f64> = (0..n * m).map(|_| rng.random_range(-1.0..1.0)).collect();
        let y: Vec<f64> = (0..n).map(|i| 3.0 * x[i * m] - 2.0 * x[i * m + 2] + rng.random_range(-0.5..0.5)).collect();
        let path = fit_lasso_path(&x, n, m, &y, None).unwrap();
        let norms: Vec<f64> = path.fits.iter().map(|f| f.l1_norm()).collect();
        prop_assert!(path.fits.windows(2).all(|w| w[0].lambda > w[1].lambda));
        prop_assert!(norms.windows(2).all(|w| w[1] + 1e-9 >= w[0]));
        let lmax = lambda_max(&x, n, m, &y).unwrap();
        let top = fit_lasso_path(&x, n, m, &y, Some(&[lmax * 1.0001])).unwrap();
        prop_assert!(top.fits[0].beta.iter().all(|&b| b == 0.0));
    }
}

#[test]
fn quantile_model_spreads_with_heteroskedastic_noise() {
    let n = 400;
    let x: Vec<f64> = (0..n).map(|i| (i % 20) as f64).collect();
    let y: Vec<f64> = (0..n).map(|i| 50.0 + x[i] * (((i * 37) % 11) as f64 - 5.0)).collect();
    let model = QregModel::fit(&x, n, 1, &y).unwrap();
    let narrow = model.predict_quantiles(&[1.0]).unwrap();
    let wide = model.predict_quantiles(&[19.0]).unwrap();
    let spread = |q: &[f64]| q[q.len() - 1] - q[0];
    assert!(spread(&wide) > 3.0 * spread(&narrow));
    assert!(narrow.windows(2).all(|w| w[0] <= w[1]));
}
