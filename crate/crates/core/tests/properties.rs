use chrono::NaiveDate;
use ndarray::Array2;
use proptest::prelude::*;

use stockgan::eval_report::{rmse, wasserstein1_empirical};
use stockgan::indicators::FeatureMatrix;
use stockgan::market_data::Normalizer;
use stockgan::windowing::{build_fake_input, make_segments};

fn matrix(rows: usize, cols: usize, seed: u64) -> FeatureMatrix {
    let start = NaiveDate::from_ymd_opt(2012, 3, 1).unwrap();
    FeatureMatrix {
        values: Array2::from_shape_fn((rows, cols), |(r, c)| ((r * 31 + c * 17) as f64 * 0.37 + seed as f64).sin() * 50.0),
        column_names: (0..cols).map(|c| format!("c{c}")).collect(),
        dates: (0..rows).map(|r| start + chrono::Days::new(r as u64)).collect(),
        close_column_index: 0,
        dropped_dates: vec![],
    }
}

proptest! {
    #![proptest_config(ProptestConfig::with_cases(200))]

    #[test]
    fn normalize_then_denormalize_close_round_trips(
        closes in prop::collection::vec(1.0f64..1e4, 2..100),
    ) {
        prop_assume!(closes.iter().any(|&c| c != closes[0]));
        let a = Array2::from_shape_vec((closes.len(), 1), closes.clone()).unwrap();
        let n = Normalizer::fit(a.view(), 0, "train").unwrap();
        let z = n.normalize(a.view()).unwrap();
        prop_assert!(z.iter().all(|v| (-1.0 - 1e-12..=1.0 + 1e-12).contains(v)));
        let back = n.denormalize_close(&z.column(0).to_vec()).unwrap();
        for (x, y) in back.iter().zip(&closes) {
            prop_assert!((x - y).abs() <= 1e-9 * y.abs().max(1.0));
        }
    }

    #[test]
    fn segment_counts_and_overlap(t in 1usize..120, n in 1usize..12, h in 1usize..6) {
        prop_assume!(t >= n + h);
        let fm = matrix(t, 3, 1);
        let set = make_segments(&fm, n, h).unwrap();
        prop_assert_eq!(set.len(), t - n - h + 1);
        for w in set.segments.windows(2) {
            prop_assert_eq!(w[0].inputs.slice(ndarray::s![1.., ..]), w[1].inputs.slice(ndarray::s![..n - 1, ..]));
        }
        let last = set.segments.last().unwrap();
        prop_assert_eq!(*last.target.last().unwrap(), fm.values[[t - 1, 0]]);
        let fake = build_fake_input(&set.segments[0], &vec![0.5; h]).unwrap();
        prop_assert_eq!(fake.len(), n + h);
    }

    #[test]
    fn rmse_is_symmetric_and_scales(
        pairs in prop::collection::vec((-1e3f64..1e3, -1e3f64..1e3), 1..60),
        k in -10.0f64..10.0,
    ) {
        let (a, b): (Vec<f64>, Vec<f64>) = pairs.into_iter().unzip();
        let r = rmse(&a, &b).unwrap();
        prop_assert!(r >= 0.0);
        prop_assert_eq!(r, rmse(&b, &a).unwrap());
        prop_assert_eq!(rmse(&a, &a).unwrap(), 0.0);
        let ka: Vec<f64> = a.iter().map(|v| k * v).collect();
        let kb: Vec<f64> = b.iter().map(|v| k * v).collect();
        prop_assert!((rmse(&ka, &kb).unwrap() - k.abs() * r).abs() <= 1e-9 * r.max(1.0));
    }

    #[test]
    fn w1_symmetric_and_translation_covariant(
        a in prop::collection::vec(-100.0f64..100.0, 1..40),
        b in prop::collection::vec(-100.0f64..100.0, 1..40),
        shift in -50.0f64..50.0,
    ) {
        let d = wasserstein1_empirical(&a, &b).unwrap();
        prop_assert_eq!(wasserstein1_empirical(&a, &a).unwrap(), 0.0);
        prop_assert!((d - wasserstein1_empirical(&b, &a).unwrap()).abs() <= 1e-9);
        let at: Vec<f64> = a.iter().map(|v| v + shift).collect();
        let bt: Vec<f64> = b.iter().map(|v| v + shift).collect();
        prop_assert!((d - wasserstein1_empirical(&at, &bt).unwrap()).abs() <= 1e-9);
    }
}

/// `∫ |F_a(x) - F_b(x)| dx` evaluated exactly between merged sample points.
fn cdf_integral(a: &[f64], b: &[f64]) -> f64 {
    let mut pts: Vec<f64> = a.iter().chain(b).copied().collect();
    pts.sort_by(f64::total_cmp);
    let cdf = |s: &[f64], x: f64| s.iter().filter(|&&v| v <= x).count() as f64 / s.len() as f64;
    pts.windows(2).map(|w| (cdf(a, w[0]) - cdf(b, w[0])).abs() * (w[1] - w[0])).sum()
}

#[test]
fn w1_matches_cdf_integral_oracle() {
    use rand::{Rng, SeedableRng};
    let mut rng = rand_chacha::ChaCha8Rng::seed_from_u64(8);
    for _ in 0..200 {
        let na = rng.random_range(1..50);
        let nb = rng.random_range(1..50);
        let a: Vec<f64> = (0..na).map(|_| rng.random_range(-10.0..10.0)).collect();
        let b: Vec<f64> = (0..nb).map(|_| rng.random_range(-5.0..15.0)).collect();
        let d = wasserstein1_empirical(&a, &b).unwrap();
        assert!((d - cdf_integral(&a, &b)).abs() < 1e-9, "{na} vs {nb}: {d}");
    }
}

#[test]
fn rmse_matches_direct_formula() {
    use rand::{Rng, SeedableRng};
    let mut rng = rand_chacha::ChaCha8Rng::seed_from_u64(9);
    for _ in 0..100 {
        let a: Vec<f64> = (0..100).map(|_| rng.random_range(-50.0..50.0)).collect();
        let b: Vec<f64> = (0..100).map(|_| rng.random_range(-50.0..50.0)).collect();
        let mut acc = 0.0;
        for i in 0..100 {
            acc += (a[i] - b[i]).powi(2);
        }
        assert!((rmse(&a, &b).unwrap() - (acc / 100.0).sqrt()).abs() < 1e-12);
    }
}
