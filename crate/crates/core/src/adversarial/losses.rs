//! Adversarial objectives, gradient penalties and feature matching.
//!
//! Every function records its computation on the caller's [`Graph`], so
//! the returned scalar can be differentiated with respect to whichever
//! parameters the caller bound.

use ndarray::Array2;
use rand::Rng;
use rand_distr::{Distribution, Normal};
use serde::{Deserialize, Serialize};

use crate::neural::graph::{row_sq_norm, scale_rows};
use crate::neural::{Critic, CriticOutput, Graph, NeuralError, Var};
use crate::windowing::Segment;

/// Floor applied to probabilities before taking logs.
pub const LOG_FLOOR: f64 = 1e-12;

fn check_batch(g: &Graph, a: Var, b: Var, what: &str) -> Result<(), NeuralError> {
    let (sa, sb) = (g.shape(a), g.shape(b));
    if sa.0 == 0 || sb.0 == 0 {
        return Err(NeuralError::shape(what, "empty batch"));
    }
    if sa.1 != sb.1 {
        return Err(NeuralError::shape(what, format!("{sa:?} vs {sb:?}")));
    }
    Ok(())
}

fn neg_mean_log_sigmoid(g: &mut Graph, logits: Var) -> Var {
    let p = g.sigmoid(logits);
    let p = g.clamp_min(p, LOG_FLOOR);
    let l = g.log(p);
    let m = g.mean_all(l);
    g.neg(m)
}

/// Losses of the original minimax game on pre-sigmoid scores.
///
/// `d_loss = -mean log σ(real) - mean log(1 - σ(fake))` and the
/// non-saturating `g_loss = -mean log σ(fake)`.
pub fn basic_gan_losses(g: &mut Graph, real_scores: Var, fake_scores: Var) -> Result<(Var, Var), NeuralError> {
    check_batch(g, real_scores, fake_scores, "basic_gan_losses")?;
    let real_term = neg_mean_log_sigmoid(g, real_scores);
    // 1 - σ(s) = σ(-s)
    let neg_fake = g.neg(fake_scores);
    let fake_term = neg_mean_log_sigmoid(g, neg_fake);
    let d_loss = g.add(real_term, fake_term);
    let g_loss = neg_mean_log_sigmoid(g, fake_scores);
    Ok((d_loss, g_loss))
}

/// `mean(fake) - mean(real)`: the critic minimizes this.
pub fn wasserstein_core(g: &mut Graph, real_scores: Var, fake_scores: Var) -> Result<Var, NeuralError> {
    check_batch(g, real_scores, fake_scores, "wasserstein_core")?;
    let mr = g.mean_all(real_scores);
    let mf = g.mean_all(fake_scores);
    Ok(g.sub(mf, mr))
}

/// `λ · mean((‖∇ₓ D(x)‖₂ - k)²)` over the rows of `points`.
fn gradient_norm_penalty(
    g: &mut Graph,
    critic: &dyn Critic,
    points: Var,
    lambda: f64,
    k: f64,
) -> Result<Var, NeuralError> {
    let CriticOutput { score, .. } = critic.critique(g, points)?;
    let total = g.sum_all(score);
    let gx = g.grad(total, &[points])[0];
    let norm = row_sq_norm(g, gx);
    let norm = g.sqrt(norm);
    let dev = g.add_scalar(norm, -k);
    let sq = g.square(dev);
    let m = g.mean_all(sq);
    Ok(g.scale(m, lambda))
}

/// Gradient penalty at random interpolates `ε·real + (1-ε)·fake`, `ε ~ U[0,1]`
/// drawn per row.
pub fn gp_wgan<R: Rng + ?Sized>(
    g: &mut Graph,
    critic: &dyn Critic,
    real: Var,
    fake: Var,
    lambda1: f64,
    rng: &mut R,
) -> Result<Var, NeuralError> {
    if g.shape(real) != g.shape(fake) {
        return Err(NeuralError::shape(
            "gp_wgan",
            format!("real {:?} vs fake {:?}", g.shape(real), g.shape(fake)),
        ));
    }
    let rows = g.shape(real).0;
    let eps: Vec<f64> = (0..rows).map(|_| rng.random::<f64>()).collect();
    let e = g.leaf(Array2::from_shape_vec((rows, 1), eps.clone()).expect("column"));
    let one_minus = g.leaf(Array2::from_shape_fn((rows, 1), |(i, _)| 1.0 - eps[i]));
    let a = scale_rows(g, e, real);
    let b = scale_rows(g, one_minus, fake);
    let interp = g.add(a, b);
    gradient_norm_penalty(g, critic, interp, lambda1, 1.0)
}

/// How the perturbation variance `c` is applied to real points.
#[derive(Debug, Clone, Copy, PartialEq, Eq, Serialize, Deserialize, Default)]
#[serde(rename_all = "snake_case")]
pub enum NoiseScale {
    /// Per-coordinate standard deviation `√c · std(real batch)`.
    #[default]
    BatchStd,
    /// Per-coordinate standard deviation `√c`.
    Literal,
}

/// Standard deviation of the perturbation for a batch of real points.
pub fn dragan_noise_std(real: &Array2<f64>, c: f64, mode: NoiseScale) -> f64 {
    match mode {
        NoiseScale::Literal => c.sqrt(),
        NoiseScale::BatchStd => {
            let n = real.len() as f64;
            let mean = real.sum() / n;
            let var = real.iter().map(|x| (x - mean) * (x - mean)).sum::<f64>() / n;
            c.sqrt() * var.sqrt()
        }
    }
}

/// Gradient penalty at Gaussian-perturbed real points, pulling the
/// input-gradient norm towards `k`.
#[allow(clippy::too_many_arguments)]
pub fn dragan_penalty<R: Rng + ?Sized>(
    g: &mut Graph,
    critic: &dyn Critic,
    real: Var,
    lambda1: f64,
    k: f64,
    c: f64,
    mode: NoiseScale,
    rng: &mut R,
) -> Result<Var, NeuralError> {
    if g.shape(real).0 == 0 {
        return Err(NeuralError::shape("dragan_penalty", "empty batch"));
    }
    if !(c >= 0.0) {
        return Err(NeuralError::Parameter(format!("noise variance c must be >= 0, got {c}")));
    }
    let base = g.value(real).clone();
    let sd = dragan_noise_std(&base, c, mode);
    let noisy = if sd > 0.0 {
        let normal = Normal::new(0.0, sd).map_err(|e| NeuralError::Parameter(e.to_string()))?;
        base.mapv(|x| x + normal.sample(rng))
    } else {
        base
    };
    let points = g.leaf(noisy);
    gradient_norm_penalty(g, critic, points, lambda1, k)
}

/// `λ2 · ‖mean(real_features) - mean(fake_features)‖₂²`.
pub fn feature_matching(g: &mut Graph, real_features: Var, fake_features: Var, lambda2: f64) -> Result<Var, NeuralError> {
    check_batch(g, real_features, fake_features, "feature_matching")?;
    let mr = g.mean_rows(real_features);
    let mf = g.mean_rows(fake_features);
    let d = g.sub(mr, mf);
    let sq = g.square(d);
    let s = g.sum_all(sq);
    Ok(g.scale(s, lambda2))
}

/// Real and generated conditioned critic inputs for one minibatch.
#[derive(Debug, Clone, Copy)]
pub struct ConditionedBatch {
    /// `B x (N+H)`: historical closes followed by the true targets.
    pub real: Var,
    /// `B x (N+H)`: historical closes followed by the predictions.
    pub fake: Var,
}

/// Concatenates each segment's historical closes with its target (real)
/// and with the matching row of `prediction` (fake).
pub fn condition_batch(g: &mut Graph, segments: &[&Segment], prediction: Var) -> Result<ConditionedBatch, NeuralError> {
    let b = segments.len();
    if b == 0 {
        return Err(NeuralError::shape("condition_batch", "empty batch"));
    }
    let n = segments[0].hist_closes.len();
    let h = segments[0].target.len();
    if g.shape(prediction) != (b, h) {
        return Err(NeuralError::shape(
            "condition_batch",
            format!("prediction {:?}, expected ({b}, {h})", g.shape(prediction)),
        ));
    }
    let real = Array2::from_shape_fn((b, n + h), |(i, j)| {
        let s = segments[i];
        if j < n {
            s.hist_closes[j]
        } else {
            s.target[j - n]
        }
    });
    let hist = Array2::from_shape_fn((b, n), |(i, j)| segments[i].hist_closes[j]);
    let real = g.leaf(real);
    let hist = g.leaf(hist);
    let fake = g.concat_cols(hist, prediction);
    Ok(ConditionedBatch { real, fake })
}

/// Penalty settings shared by the Wasserstein-style critic costs.
#[derive(Debug, Clone, Copy, PartialEq)]
pub struct PenaltyConfig {
    pub lambda1: f64,
    pub k: f64,
    pub c: f64,
    pub noise: NoiseScale,
}

#[derive(Debug, Clone, Copy)]
pub struct CriticCost {
    pub total: Var,
    pub wasserstein: Var,
    pub penalty: Var,
}

/// Critic cost of the proposed model: Wasserstein term plus the DRAGAN
/// penalty around real points.
pub fn discriminator_cost<R: Rng + ?Sized>(
    g: &mut Graph,
    critic: &dyn Critic,
    batch: &ConditionedBatch,
    penalty: &PenaltyConfig,
    rng: &mut R,
) -> Result<CriticCost, NeuralError> {
    let real = critic.critique(g, batch.real)?;
    let fake = critic.critique(g, batch.fake)?;
    let wasserstein = wasserstein_core(g, real.score, fake.score)?;
    let pen = dragan_penalty(g, critic, batch.real, penalty.lambda1, penalty.k, penalty.c, penalty.noise, rng)?;
    let total = g.add(wasserstein, pen);
    Ok(CriticCost {
        total,
        wasserstein,
        penalty: pen,
    })
}

/// WGAN-GP critic cost: Wasserstein term plus the interpolate penalty.
pub fn wgan_gp_discriminator_cost<R: Rng + ?Sized>(
    g: &mut Graph,
    critic: &dyn Critic,
    batch: &ConditionedBatch,
    lambda1: f64,
    rng: &mut R,
) -> Result<CriticCost, NeuralError> {
    let real = critic.critique(g, batch.real)?;
    let fake = critic.critique(g, batch.fake)?;
    let wasserstein = wasserstein_core(g, real.score, fake.score)?;
    let pen = gp_wgan(g, critic, batch.real, batch.fake, lambda1, rng)?;
    let total = g.add(wasserstein, pen);
    Ok(CriticCost {
        total,
        wasserstein,
        penalty: pen,
    })
}

#[derive(Debug, Clone, Copy)]
pub struct GeneratorCost {
    pub total: Var,
    pub adversarial: Var,
    pub feature_matching: Var,
}

/// Generator cost of the proposed model: negated mean fake score plus
/// weighted feature matching on the critic's tap layer.
pub fn generator_cost(
    g: &mut Graph,
    critic: &dyn Critic,
    batch: &ConditionedBatch,
    lambda2: f64,
) -> Result<GeneratorCost, NeuralError> {
    let real = critic.critique(g, batch.real)?;
    let fake = critic.critique(g, batch.fake)?;
    let m = g.mean_all(fake.score);
    let adversarial = g.neg(m);
    let fm = feature_matching(g, real.features, fake.features, lambda2)?;
    let total = g.add(adversarial, fm);
    Ok(GeneratorCost {
        total,
        adversarial,
        feature_matching: fm,
    })
}

/// `D(x) = x w + b` with `x` itself as the feature representation.
#[derive(Debug, Clone, Copy)]
pub struct LinearCritic {
    /// `L x 1`.
    pub w: Var,
    /// `1 x 1`.
    pub b: Var,
}

impl LinearCritic {
    pub fn new(g: &mut Graph, weights: &[f64], bias: f64) -> Self {
        let w = g.leaf(Array2::from_shape_vec((weights.len(), 1), weights.to_vec()).expect("column"));
        let b = g.leaf(Array2::from_elem((1, 1), bias));
        Self { w, b }
    }
}

impl Critic for LinearCritic {
    fn critique(&self, g: &mut Graph, x: Var) -> Result<CriticOutput, NeuralError> {
        if g.shape(x).1 != g.shape(self.w).0 {
            return Err(NeuralError::shape(
                "linear critic",
                format!("input {:?}, weights {:?}", g.shape(x), g.shape(self.w)),
            ));
        }
        let s = g.matmul(x, self.w);
        let score = g.add_row(s, self.b);
        Ok(CriticOutput { score, features: x })
    }
}
