mod common;

use ndarray::Array2;
use rand::{Rng, SeedableRng};
use rand_chacha::ChaCha8Rng;

use common::{random_segments, tiny_discriminator, tiny_generator};
use stockgan::adversarial::{
    basic_gan_losses, condition_batch, discriminator_cost, dragan_penalty, feature_matching, generator_cost, gp_wgan,
    wasserstein_core, LinearCritic, NoiseScale, PenaltyConfig,
};
use stockgan::neural::models::{discriminator_forward, Discriminator};
use stockgan::neural::{Critic, Graph};
use stockgan::windowing::Segment;

fn column(g: &mut Graph, v: &[f64]) -> stockgan::neural::Var {
    g.leaf(Array2::from_shape_vec((v.len(), 1), v.to_vec()).unwrap())
}

fn sigmoid(x: f64) -> f64 {
    1.0 / (1.0 + (-x).exp())
}

fn mean(v: &[f64]) -> f64 {
    v.iter().sum::<f64>() / v.len() as f64
}

#[test]
fn basic_gan_matches_direct_formula() {
    let mut rng = ChaCha8Rng::seed_from_u64(1);
    for _ in 0..100 {
        let n = rng.random_range(1..20);
        let real: Vec<f64> = (0..n).map(|_| rng.random_range(-5.0..5.0)).collect();
        let fake: Vec<f64> = (0..n).map(|_| rng.random_range(-5.0..5.0)).collect();
        let mut g = Graph::new();
        let (r, f) = (column(&mut g, &real), column(&mut g, &fake));
        let (d, gl) = basic_gan_losses(&mut g, r, f).unwrap();
        let d_oracle = -mean(&real.iter().map(|&s| sigmoid(s).ln()).collect::<Vec<_>>())
            - mean(&fake.iter().map(|&s| (1.0 - sigmoid(s)).ln()).collect::<Vec<_>>());
        let g_oracle = -mean(&fake.iter().map(|&s| sigmoid(s).ln()).collect::<Vec<_>>());
        assert!((g.scalar(d) - d_oracle).abs() < 1e-12);
        assert!((g.scalar(gl) - g_oracle).abs() < 1e-12);
    }
}

#[test]
fn basic_gan_saturated_scores_stay_finite() {
    let mut g = Graph::new();
    let r = column(&mut g, &[-800.0]);
    let f = column(&mut g, &[800.0]);
    let (d, _) = basic_gan_losses(&mut g, r, f).unwrap();
    let v = g.scalar(d);
    assert!(v.is_finite());
    assert!((v - 2.0 * -(1e-12f64).ln()).abs() < 1e-9);
}

#[test]
fn wasserstein_matches_mean_difference() {
    let mut rng = ChaCha8Rng::seed_from_u64(2);
    for _ in 0..100 {
        let n = rng.random_range(1..30);
        let real: Vec<f64> = (0..n).map(|_| rng.random_range(-3.0..3.0)).collect();
        let fake: Vec<f64> = (0..n).map(|_| rng.random_range(-3.0..3.0)).collect();
        let mut g = Graph::new();
        let (r, f) = (column(&mut g, &real), column(&mut g, &fake));
        let w = wasserstein_core(&mut g, r, f).unwrap();
        assert!((g.scalar(w) - (mean(&fake) - mean(&real))).abs() < 1e-12);
    }
}

#[test]
fn feature_matching_matches_squared_distance_of_means() {
    let mut rng = ChaCha8Rng::seed_from_u64(3);
    for _ in 0..100 {
        let (b, d) = (rng.random_range(1..10), rng.random_range(1..8));
        let lambda2 = rng.random_range(0.0..3.0);
        let rf = Array2::from_shape_fn((b, d), |_| rng.random_range(-2.0..2.0));
        let ff = Array2::from_shape_fn((b, d), |_| rng.random_range(-2.0..2.0));
        let oracle: f64 = (0..d)
            .map(|j| {
                let diff = rf.column(j).sum() / b as f64 - ff.column(j).sum() / b as f64;
                diff * diff
            })
            .sum::<f64>()
            * lambda2;
        let mut g = Graph::new();
        let (r, f) = (g.leaf(rf.clone()), g.leaf(ff));
        let fm = feature_matching(&mut g, r, f, lambda2).unwrap();
        assert!((g.scalar(fm) - oracle).abs() < 1e-12);
        let r2 = g.leaf(rf);
        let same = feature_matching(&mut g, r, r2, lambda2).unwrap();
        assert_eq!(g.scalar(same), 0.0);
    }
    let mut g = Graph::new();
    let a = g.leaf(Array2::zeros((2, 3)));
    let b = g.leaf(Array2::zeros((2, 4)));
    assert!(feature_matching(&mut g, a, b, 1.0).is_err());
}

/// Input gradient norm of the critic at each row, by central differences.
fn fd_input_grad_norms(critic_at: &dyn Fn(&Array2<f64>) -> Vec<f64>, x: &Array2<f64>) -> Vec<f64> {
    let h = 1e-6;
    let mut sq = vec![0.0; x.nrows()];
    for j in 0..x.ncols() {
        let mut up = x.clone();
        let mut down = x.clone();
        up.column_mut(j).mapv_inplace(|v| v + h);
        down.column_mut(j).mapv_inplace(|v| v - h);
        let (su, sd) = (critic_at(&up), critic_at(&down));
        for i in 0..x.nrows() {
            let d = (su[i] - sd[i]) / (2.0 * h);
            sq[i] += d * d;
        }
    }
    sq.into_iter().map(f64::sqrt).collect()
}

fn rel(a: f64, b: f64) -> f64 {
    (a - b).abs() / a.abs().max(b.abs()).max(1e-12)
}

#[test]
fn gp_wgan_matches_finite_difference_oracle() {
    let mut rng = ChaCha8Rng::seed_from_u64(4);
    let cfg = tiny_discriminator(3, 1);
    let params = cfg.init_params(&mut rng).unwrap();
    let real = Array2::from_shape_fn((5, 4), |_| rng.random_range(-1.0..1.0));
    let fake = Array2::from_shape_fn((5, 4), |_| rng.random_range(-1.0..1.0));
    let lambda1 = 10.0;

    let mut g = Graph::new();
    let d = Discriminator::bind(&mut g, &cfg, &params);
    let (r, f) = (g.leaf(real.clone()), g.leaf(fake.clone()));
    let pen = gp_wgan(&mut g, &d, r, f, lambda1, &mut ChaCha8Rng::seed_from_u64(99)).unwrap();

    let mut eps_rng = ChaCha8Rng::seed_from_u64(99);
    let eps: Vec<f64> = (0..5).map(|_| eps_rng.random::<f64>()).collect();
    let interp = Array2::from_shape_fn((5, 4), |(i, j)| eps[i] * real[[i, j]] + (1.0 - eps[i]) * fake[[i, j]]);
    let score = |x: &Array2<f64>| {
        let mut g = Graph::new();
        let b = params.bind(&mut g);
        let xv = g.leaf(x.clone());
        let out = discriminator_forward(&mut g, &b, &cfg, xv).unwrap();
        g.value(out.score).column(0).to_vec()
    };
    let norms = fd_input_grad_norms(&score, &interp);
    let oracle = mean(&norms.iter().map(|n| lambda1 * (n - 1.0) * (n - 1.0)).collect::<Vec<_>>());
    assert!(rel(g.scalar(pen), oracle) < 1e-4, "{} vs {oracle}", g.scalar(pen));
}

#[test]
fn dragan_without_noise_matches_finite_difference_oracle() {
    let mut rng = ChaCha8Rng::seed_from_u64(5);
    let cfg = tiny_discriminator(3, 1);
    let params = cfg.init_params(&mut rng).unwrap();
    let real = Array2::from_shape_fn((6, 4), |_| rng.random_range(-1.0..1.0));
    let (lambda1, k) = (10.0, 0.7);

    let mut g = Graph::new();
    let d = Discriminator::bind(&mut g, &cfg, &params);
    let r = g.leaf(real.clone());
    let pen = dragan_penalty(&mut g, &d, r, lambda1, k, 0.0, NoiseScale::BatchStd, &mut rng).unwrap();

    let score = |x: &Array2<f64>| {
        let mut g = Graph::new();
        let b = params.bind(&mut g);
        let xv = g.leaf(x.clone());
        let out = discriminator_forward(&mut g, &b, &cfg, xv).unwrap();
        g.value(out.score).column(0).to_vec()
    };
    let norms = fd_input_grad_norms(&score, &real);
    let oracle = mean(&norms.iter().map(|n| lambda1 * (n - k) * (n - k)).collect::<Vec<_>>());
    assert!(rel(g.scalar(pen), oracle) < 1e-4, "{} vs {oracle}", g.scalar(pen));
}

#[test]
fn linear_critic_penalties_are_closed_form() {
    let mut rng = ChaCha8Rng::seed_from_u64(6);
    for _ in 0..50 {
        let w: Vec<f64> = (0..4).map(|_| rng.random_range(-2.0..2.0)).collect();
        let norm = w.iter().map(|v| v * v).sum::<f64>().sqrt();
        let (lambda1, k, c) = (10.0, rng.random_range(0.1..2.0), rng.random_range(0.0..20.0));
        let real = Array2::from_shape_fn((7, 4), |_| rng.random_range(-50.0..50.0));
        let fake = Array2::from_shape_fn((7, 4), |_| rng.random_range(-50.0..50.0));
        let mut g = Graph::new();
        let d = LinearCritic::new(&mut g, &w, rng.random_range(-1.0..1.0));
        let (r, f) = (g.leaf(real), g.leaf(fake));
        let gp = gp_wgan(&mut g, &d, r, f, lambda1, &mut rng).unwrap();
        let dr = dragan_penalty(&mut g, &d, r, lambda1, k, c, NoiseScale::BatchStd, &mut rng).unwrap();
        let lit = dragan_penalty(&mut g, &d, r, lambda1, k, c, NoiseScale::Literal, &mut rng).unwrap();
        assert!((g.scalar(gp) - lambda1 * (norm - 1.0).powi(2)).abs() < 1e-10);
        assert!((g.scalar(dr) - lambda1 * (norm - k).powi(2)).abs() < 1e-10);
        assert!((g.scalar(lit) - lambda1 * (norm - k).powi(2)).abs() < 1e-10);
    }
}

#[test]
fn constant_critic_penalty_is_lambda() {
    let mut g = Graph::new();
    let d = LinearCritic::new(&mut g, &[0.0; 4], 3.0);
    let r = g.leaf(Array2::from_elem((3, 4), 0.5));
    let f = g.leaf(Array2::from_elem((3, 4), -0.5));
    let mut rng = ChaCha8Rng::seed_from_u64(0);
    let gp = gp_wgan(&mut g, &d, r, f, 10.0, &mut rng).unwrap();
    let dr = dragan_penalty(&mut g, &d, r, 10.0, 1.0, 10.0, NoiseScale::BatchStd, &mut rng).unwrap();
    assert_eq!(g.scalar(gp), 10.0);
    assert_eq!(g.scalar(dr), 10.0);
}

fn segments_and_prediction(seed: u64) -> (Vec<Segment>, Array2<f64>) {
    let mut rng = ChaCha8Rng::seed_from_u64(seed);
    let set = random_segments(5, 3, 1, &mut rng);
    let pred = Array2::from_shape_fn((5, 1), |_| rng.random_range(-1.0..1.0));
    (set.segments, pred)
}

#[test]
fn discriminator_cost_is_sum_of_terms() {
    let (segs, pred) = segments_and_prediction(7);
    let batch: Vec<&Segment> = segs.iter().collect();
    let cfg = tiny_discriminator(3, 1);
    let params = cfg.init_params(&mut ChaCha8Rng::seed_from_u64(8)).unwrap();
    let penalty = PenaltyConfig {
        lambda1: 10.0,
        k: 1.0,
        c: 10.0,
        noise: NoiseScale::BatchStd,
    };

    let mut g = Graph::new();
    let d = Discriminator::bind(&mut g, &cfg, &params);
    let p = g.leaf(pred.clone());
    let cond = condition_batch(&mut g, &batch, p).unwrap();
    let cost = discriminator_cost(&mut g, &d, &cond, &penalty, &mut ChaCha8Rng::seed_from_u64(9)).unwrap();

    let mut g2 = Graph::new();
    let d2 = Discriminator::bind(&mut g2, &cfg, &params);
    let p2 = g2.leaf(pred);
    let cond2 = condition_batch(&mut g2, &batch, p2).unwrap();
    let rs = d2.critique(&mut g2, cond2.real).unwrap().score;
    let fs = d2.critique(&mut g2, cond2.fake).unwrap().score;
    let w = wasserstein_core(&mut g2, rs, fs).unwrap();
    let pen = dragan_penalty(&mut g2, &d2, cond2.real, 10.0, 1.0, 10.0, NoiseScale::BatchStd, &mut ChaCha8Rng::seed_from_u64(9)).unwrap();
    assert!((g.scalar(cost.total) - (g2.scalar(w) + g2.scalar(pen))).abs() < 1e-10);

    // λ1 = 0 isolates the Wasserstein term exactly.
    let zero = PenaltyConfig { lambda1: 0.0, ..penalty };
    let iso = discriminator_cost(&mut g, &d, &cond, &zero, &mut ChaCha8Rng::seed_from_u64(9)).unwrap();
    assert_eq!(g.scalar(iso.total), g.scalar(cost.wasserstein));
}

#[test]
fn discriminator_cost_vanishes_for_perfect_generator_and_unit_linear_critic() {
    let (segs, _) = segments_and_prediction(10);
    let batch: Vec<&Segment> = segs.iter().collect();
    let mut g = Graph::new();
    let d = LinearCritic::new(&mut g, &[0.6, 0.0, 0.8, 0.0], 0.3);
    let exact = g.leaf(Array2::from_shape_fn((5, 1), |(i, _)| segs[i].target[0]));
    let cond = condition_batch(&mut g, &batch, exact).unwrap();
    let penalty = PenaltyConfig {
        lambda1: 10.0,
        k: 1.0,
        c: 10.0,
        noise: NoiseScale::BatchStd,
    };
    let cost = discriminator_cost(&mut g, &d, &cond, &penalty, &mut ChaCha8Rng::seed_from_u64(1)).unwrap();
    assert!(g.scalar(cost.total).abs() < 1e-12);
}

#[test]
fn generator_cost_term_isolation() {
    let (segs, pred) = segments_and_prediction(11);
    let batch: Vec<&Segment> = segs.iter().collect();
    let cfg = tiny_discriminator(3, 1);
    let params = cfg.init_params(&mut ChaCha8Rng::seed_from_u64(12)).unwrap();
    let mut g = Graph::new();
    let d = Discriminator::bind(&mut g, &cfg, &params);
    let p = g.leaf(pred);
    let cond = condition_batch(&mut g, &batch, p).unwrap();

    let with_fm = generator_cost(&mut g, &d, &cond, 1.0).unwrap();
    let no_fm = generator_cost(&mut g, &d, &cond, 0.0).unwrap();
    let fs = d.critique(&mut g, cond.fake).unwrap();
    let neg_mean_fake = -g.value(fs.score).mean().unwrap();
    assert_eq!(g.scalar(no_fm.total), neg_mean_fake);
    let rf = d.critique(&mut g, cond.real).unwrap().features;
    let fm = feature_matching(&mut g, rf, fs.features, 1.0).unwrap();
    assert!((g.scalar(with_fm.total) - (neg_mean_fake + g.scalar(fm))).abs() < 1e-10);

    // A generator that reproduces the targets makes the critic inputs identical.
    let exact = g.leaf(Array2::from_shape_fn((5, 1), |(i, _)| segs[i].target[0]));
    let cond = condition_batch(&mut g, &batch, exact).unwrap();
    let cost = generator_cost(&mut g, &d, &cond, 1.0).unwrap();
    let rs = d.critique(&mut g, cond.real).unwrap().score;
    assert_eq!(g.scalar(cost.feature_matching), 0.0);
    assert_eq!(g.scalar(cost.total), -g.value(rs).mean().unwrap());
}

#[test]
fn conditioned_inputs_have_window_plus_horizon_columns() {
    let mut rng = ChaCha8Rng::seed_from_u64(13);
    for h in [1, 2, 3, 5] {
        let set = random_segments(4, 10, h, &mut rng);
        let batch: Vec<&Segment> = set.segments.iter().collect();
        let gen = tiny_generator(10, h);
        let gp = gen.init_params(&mut rng).unwrap();
        let mut g = Graph::new();
        let b = gp.bind(&mut g);
        let windows: Vec<_> = batch.iter().map(|s| &s.inputs).collect();
        let pred = stockgan::neural::models::generator_forward(&mut g, &b, &gen, &windows).unwrap();
        assert_eq!(g.shape(pred), (4, h));
        let cond = condition_batch(&mut g, &batch, pred).unwrap();
        assert_eq!(g.shape(cond.real), (4, 10 + h));
        assert_eq!(g.shape(cond.fake), (4, 10 + h));
        let bad = g.leaf(Array2::zeros((4, h + 1)));
        assert!(condition_batch(&mut g, &batch, bad).is_err());
    }
}
