#![allow(dead_code)]

use chrono::NaiveDate;
use ndarray::Array2;
use rand::{Rng, SeedableRng};
use rand_chacha::ChaCha8Rng;

use stockgan::adversarial::{
    basic_gan_losses, condition_batch, discriminator_cost, generator_cost, wgan_gp_discriminator_cost, NoiseScale,
    PenaltyConfig,
};
use stockgan::neural::models::{generator_forward, Discriminator};
use stockgan::neural::{grad, BoundParams, Critic, DiscriminatorConfig, GeneratorConfig, Graph, ModelParams, NeuralError, Var};
use stockgan::windowing::{Segment, SegmentSet};

pub const FEATURES: usize = 14;

pub fn tiny_generator(window: usize, horizon: usize) -> GeneratorConfig {
    GeneratorConfig {
        window,
        features: FEATURES,
        horizon,
        gru_units: vec![4, 3],
        dense_units: vec![4, horizon],
        leaky_slope: 0.2,
    }
}

pub fn tiny_discriminator(window: usize, horizon: usize) -> DiscriminatorConfig {
    DiscriminatorConfig {
        input_length: window + horizon,
        conv_channels: vec![2, 3, 4],
        kernel_size: 3,
        dense_units: vec![4, 1],
        leaky_slope: 0.2,
        feature_tap: 3,
    }
}

/// Segments with uniform `[-1, 1]` inputs; hist closes are input column 3.
pub fn random_segments(n: usize, window: usize, horizon: usize, rng: &mut ChaCha8Rng) -> SegmentSet {
    let start = NaiveDate::from_ymd_opt(2015, 1, 1).unwrap();
    let segments = (0..n)
        .map(|i| {
            let inputs = Array2::from_shape_fn((window, FEATURES), |_| rng.random_range(-1.0..1.0));
            let hist_closes = inputs.column(3).to_vec();
            let target: Vec<f64> = (0..horizon).map(|_| rng.random_range(-1.0..1.0)).collect();
            let anchor_date = start + chrono::Days::new(i as u64);
            Segment {
                inputs,
                hist_closes,
                target,
                anchor_date,
                target_dates: (1..=horizon).map(|h| anchor_date + chrono::Days::new(h as u64)).collect(),
            }
        })
        .collect();
    SegmentSet {
        segments,
        window,
        horizon,
        features: FEATURES,
    }
}

/// Which of the four costs to evaluate.
#[derive(Debug, Clone, Copy, PartialEq, Eq)]
pub enum Loss {
    BasicGanD,
    BasicGanG,
    WganGpD,
    DraganD,
    DraganFmG,
}

impl Loss {
    pub const ALL: [Loss; 5] = [Loss::BasicGanD, Loss::BasicGanG, Loss::WganGpD, Loss::DraganD, Loss::DraganFmG];
}

/// Fixed context for evaluating a cost as a function of either parameter set.
pub struct Setup {
    pub gen: GeneratorConfig,
    pub disc: DiscriminatorConfig,
    pub gen_params: ModelParams,
    pub disc_params: ModelParams,
    pub segments: SegmentSet,
    /// Seed for ε draws; identical on every evaluation.
    pub eps_seed: u64,
}

impl Setup {
    pub fn tiny(seed: u64) -> Self {
        let mut rng = ChaCha8Rng::seed_from_u64(seed);
        let gen = tiny_generator(3, 1);
        let disc = tiny_discriminator(3, 1);
        let gen_params = gen.init_params(&mut rng).unwrap();
        let disc_params = disc.init_params(&mut rng).unwrap();
        let segments = random_segments(6, 3, 1, &mut rng);
        Self {
            gen,
            disc,
            gen_params,
            disc_params,
            segments,
            eps_seed: seed ^ 0x5eed,
        }
    }

    fn cost(&self, g: &mut Graph, gen: &BoundParams, critic: &dyn Critic, loss: Loss) -> Result<Var, NeuralError> {
        let batch: Vec<&Segment> = self.segments.segments.iter().collect();
        let windows: Vec<&Array2<f64>> = batch.iter().map(|s| &s.inputs).collect();
        let pred = generator_forward(g, gen, &self.gen, &windows)?;
        let cond = condition_batch(g, &batch, pred)?;
        let mut rng = ChaCha8Rng::seed_from_u64(self.eps_seed);
        let penalty = PenaltyConfig {
            lambda1: 10.0,
            k: 1.0,
            c: 0.0,
            noise: NoiseScale::BatchStd,
        };
        Ok(match loss {
            Loss::BasicGanD | Loss::BasicGanG => {
                let r = critic.critique(g, cond.real)?;
                let f = critic.critique(g, cond.fake)?;
                let (d, gl) = basic_gan_losses(g, r.score, f.score)?;
                if loss == Loss::BasicGanD {
                    d
                } else {
                    gl
                }
            }
            Loss::WganGpD => wgan_gp_discriminator_cost(g, critic, &cond, 10.0, &mut rng)?.total,
            Loss::DraganD => discriminator_cost(g, critic, &cond, &penalty, &mut rng)?.total,
            Loss::DraganFmG => generator_cost(g, critic, &cond, 1.0)?.total,
        })
    }

    /// Loss value and gradient with respect to the generator parameters.
    pub fn grad_wrt_generator(&self, gen_params: &ModelParams, loss: Loss) -> (f64, stockgan::neural::LayerGrads) {
        grad(gen_params, |g, bound| {
            let critic = Discriminator::bind(g, &self.disc, &self.disc_params);
            self.cost(g, bound, &critic, loss)
        })
        .unwrap()
    }

    /// Loss value and gradient with respect to the critic parameters.
    pub fn grad_wrt_critic(&self, disc_params: &ModelParams, loss: Loss) -> (f64, stockgan::neural::LayerGrads) {
        grad(disc_params, |g, bound| {
            let gen = self.gen_params.bind(g);
            let critic = Discriminator {
                config: self.disc.clone(),
                vars: bound.clone(),
            };
            self.cost(g, &gen, &critic, loss)
        })
        .unwrap()
    }
}

/// `|a - n| / max(|a|, |n|, floor)`.
pub fn rel_err(a: f64, n: f64, floor: f64) -> f64 {
    (a - n).abs() / a.abs().max(n.abs()).max(floor)
}

/// Worst relative error of `analytic` against central differences of `f`.
pub fn max_fd_error(
    params: &ModelParams,
    analytic: &stockgan::neural::LayerGrads,
    step: f64,
    floor: f64,
    f: impl Fn(&ModelParams) -> f64,
) -> (f64, String) {
    let mut worst = (0.0, String::new());
    let mut p = params.clone();
    let names: Vec<String> = params.names().map(String::from).collect();
    for name in names {
        let shape = params.get(&name).unwrap().dim();
        for r in 0..shape.0 {
            for c in 0..shape.1 {
                let orig = params.get(&name).unwrap()[[r, c]];
                p.get_mut(&name).unwrap()[[r, c]] = orig + step;
                let up = f(&p);
                p.get_mut(&name).unwrap()[[r, c]] = orig - step;
                let down = f(&p);
                p.get_mut(&name).unwrap()[[r, c]] = orig;
                let numeric = (up - down) / (2.0 * step);
                let a = analytic.get(&name).unwrap()[[r, c]];
                let e = rel_err(a, numeric, floor);
                if e > worst.0 {
                    worst = (e, format!("{name}[{r},{c}] analytic {a:e} numeric {numeric:e}"));
                }
            }
        }
    }
    worst
}

/// Random positive price path of length 60..=300.
pub fn random_series(rng: &mut ChaCha8Rng) -> Vec<f64> {
    let n = rng.random_range(60..=300);
    let mut p = rng.random_range(5.0..500.0);
    (0..n)
        .map(|_| {
            p *= (rng.random_range(-0.05..0.05f64)).exp();
            p
        })
        .collect()
}

pub fn oracle_sma(x: &[f64], n: usize, t: usize) -> Option<f64> {
    (t + 1 >= n).then(|| x[t + 1 - n..=t].iter().sum::<f64>() / n as f64)
}

/// Closed form of the recursively defined EMA seeded at `x[0]`.
pub fn oracle_ema(x: &[f64], span: usize, t: usize) -> f64 {
    let a = 2.0 / (span as f64 + 1.0);
    let mut v = (1.0 - a).powi(t as i32) * x[0];
    for (i, xi) in x.iter().enumerate().take(t + 1).skip(1) {
        v += a * (1.0 - a).powi((t - i) as i32) * xi;
    }
    v
}

pub fn oracle_sd(x: &[f64], n: usize, t: usize) -> f64 {
    let w = &x[t + 1 - n..=t];
    let m = w.iter().sum::<f64>() / n as f64;
    (w.iter().map(|v| (v - m).powi(2)).sum::<f64>() / n as f64).sqrt()
}
