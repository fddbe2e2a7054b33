//! Alternating critic/generator optimization and the LSTM regression baseline.

use std::fmt;
use std::io::{Read, Write};
use std::str::FromStr;

use ndarray::Array2;
use rand::seq::SliceRandom;
use rand::SeedableRng;
use rand_chacha::ChaCha8Rng;
use serde::{Deserialize, Serialize};
use thiserror::Error;

use super::losses::{
    basic_gan_losses, condition_batch, discriminator_cost, generator_cost, wgan_gp_discriminator_cost,
    NoiseScale, PenaltyConfig,
};
use crate::market_data::{MarketDataError, Normalizer};
use crate::neural::checkpoint::{read_checkpoint, write_checkpoint};
use crate::neural::models::Discriminator;
use crate::neural::{
    Adam, AdamConfig, BiLstmConfig, Critic, DiscriminatorConfig, GeneratorConfig, Graph, ModelParams, ModelSpec,
    NeuralError,
};
use crate::windowing::{Segment, SegmentSet};

#[derive(Debug, Error)]
pub enum TrainError {
    #[error("invalid training config: {0}")]
    Config(String),
    #[error("non-finite {loss} at epoch {epoch}, batch {batch}: {detail}")]
    NonFinite {
        epoch: usize,
        batch: usize,
        loss: &'static str,
        detail: String,
    },
    #[error(transparent)]
    Neural(#[from] NeuralError),
    #[error(transparent)]
    Data(#[from] MarketDataError),
    #[error("checkpoint metadata: {0}")]
    Metadata(String),
}

/// Training objective.
#[derive(Debug, Clone, Copy, PartialEq, Eq, Hash, Serialize, Deserialize, PartialOrd, Ord)]
#[serde(rename_all = "snake_case")]
pub enum Objective {
    /// Wasserstein critic with DRAGAN penalty; generator with feature matching.
    DraganFm,
    WganGp,
    BasicGan,
    /// Bidirectional LSTM regressor trained on squared error.
    Lstm,
}

impl Objective {
    pub const ALL: [Objective; 4] = [Objective::DraganFm, Objective::WganGp, Objective::BasicGan, Objective::Lstm];

    pub fn as_str(self) -> &'static str {
        match self {
            Objective::DraganFm => "dragan_fm",
            Objective::WganGp => "wgan_gp",
            Objective::BasicGan => "basic_gan",
            Objective::Lstm => "lstm",
        }
    }

    pub fn is_adversarial(self) -> bool {
        self != Objective::Lstm
    }
}

impl fmt::Display for Objective {
    fn fmt(&self, f: &mut fmt::Formatter<'_>) -> fmt::Result {
        f.write_str(self.as_str())
    }
}

impl FromStr for Objective {
    type Err = TrainError;

    fn from_str(s: &str) -> Result<Self, Self::Err> {
        Objective::ALL
            .into_iter()
            .find(|o| o.as_str() == s)
            .ok_or_else(|| TrainError::Config(format!("unknown objective `{s}`")))
    }
}

/// Optimization hyperparameters.
#[derive(Debug, Clone, PartialEq, Serialize, Deserialize)]
#[serde(default)]
pub struct TrainConfig {
    pub lambda1: f64,
    pub lambda2: f64,
    pub k: f64,
    pub c: f64,
    pub noise_scale: NoiseScale,
    pub lr: f64,
    pub beta1: f64,
    pub beta2: f64,
    pub batch_size: usize,
    pub epochs: usize,
    /// Critic updates per generator update; `None` picks 5 for WGAN-GP and 1 otherwise.
    pub d_steps_per_g_step: Option<usize>,
    pub seed: u64,
}

impl Default for TrainConfig {
    fn default() -> Self {
        Self {
            lambda1: 10.0,
            lambda2: 1.0,
            k: 1.0,
            c: 10.0,
            noise_scale: NoiseScale::BatchStd,
            lr: 1e-4,
            beta1: 0.9,
            beta2: 0.999,
            batch_size: 64,
            epochs: 200,
            d_steps_per_g_step: None,
            seed: 42,
        }
    }
}

impl TrainConfig {
    pub fn validate(&self) -> Result<(), TrainError> {
        let bad = |m: &str| Err(TrainError::Config(m.to_string()));
        if !(self.lambda1 >= 0.0 && self.lambda2 >= 0.0 && self.c >= 0.0) {
            return bad("lambda1, lambda2 and c must be >= 0");
        }
        if !(self.k > 0.0) {
            return bad("k must be > 0");
        }
        if self.batch_size < 2 {
            return bad("batch_size must be >= 2");
        }
        if !(self.lr > 0.0) {
            return bad("lr must be > 0");
        }
        if self.d_steps_per_g_step == Some(0) {
            return bad("d_steps_per_g_step must be >= 1");
        }
        Ok(())
    }

    pub fn d_steps(&self, objective: Objective) -> usize {
        self.d_steps_per_g_step.unwrap_or(match objective {
            Objective::WganGp => 5,
            _ => 1,
        })
    }

    fn adam(&self) -> AdamConfig {
        AdamConfig {
            lr: self.lr,
            beta1: self.beta1,
            beta2: self.beta2,
            eps: 1e-8,
        }
    }
}

/// Layer widths shared by all objectives.
#[derive(Debug, Clone, PartialEq, Serialize, Deserialize)]
#[serde(default)]
pub struct ArchConfig {
    pub gru_units: Vec<usize>,
    pub generator_dense: usize,
    pub conv_channels: Vec<usize>,
    pub kernel_size: usize,
    pub critic_dense: usize,
    pub leaky_slope: f64,
    pub feature_tap: usize,
    pub lstm_units: usize,
}

impl Default for ArchConfig {
    fn default() -> Self {
        Self {
            gru_units: vec![256, 128],
            generator_dense: 64,
            conv_channels: vec![32, 64, 128],
            kernel_size: 3,
            critic_dense: 64,
            leaky_slope: 0.2,
            feature_tap: 3,
            lstm_units: 128,
        }
    }
}

impl ArchConfig {
    pub fn generator(&self, window: usize, features: usize, horizon: usize) -> GeneratorConfig {
        GeneratorConfig {
            window,
            features,
            horizon,
            gru_units: self.gru_units.clone(),
            dense_units: vec![self.generator_dense, horizon],
            leaky_slope: self.leaky_slope,
        }
    }

    pub fn discriminator(&self, window: usize, horizon: usize) -> DiscriminatorConfig {
        DiscriminatorConfig {
            input_length: window + horizon,
            conv_channels: self.conv_channels.clone(),
            kernel_size: self.kernel_size,
            dense_units: vec![self.critic_dense, 1],
            leaky_slope: self.leaky_slope,
            feature_tap: self.feature_tap,
        }
    }

    pub fn forecaster(&self, objective: Objective, window: usize, features: usize, horizon: usize) -> ModelSpec {
        match objective {
            Objective::Lstm => ModelSpec::BiLstm(BiLstmConfig {
                window,
                features,
                horizon,
                units: self.lstm_units,
            }),
            _ => ModelSpec::Generator(self.generator(window, features, horizon)),
        }
    }
}

/// Per-epoch training summary.
#[derive(Debug, Clone, PartialEq, Serialize, Deserialize)]
pub struct EpochRecord {
    pub epoch: usize,
    /// Mean critic loss; `None` for the regression baseline.
    pub d_loss: Option<f64>,
    /// Mean generator (or regression) loss.
    pub g_loss: f64,
    /// RMSE over the training segments in price units.
    pub train_rmse: f64,
}

/// A trained forecaster: only the generator (or LSTM) is kept.
#[derive(Debug, Clone, PartialEq)]
pub struct TrainedModel {
    pub objective: Objective,
    pub spec: ModelSpec,
    pub params: ModelParams,
    pub config: TrainConfig,
    pub normalizer: Normalizer,
    pub history: Vec<EpochRecord>,
}

#[derive(Serialize, Deserialize)]
struct Metadata {
    objective: Objective,
    spec: ModelSpec,
    config: TrainConfig,
    normalizer: Normalizer,
    history: Vec<EpochRecord>,
    seed: u64,
}

impl TrainedModel {
    pub fn window(&self) -> usize {
        self.spec.window()
    }

    pub fn horizon(&self) -> usize {
        self.spec.horizon()
    }

    pub fn save<W: Write>(&self, w: W) -> Result<(), TrainError> {
        let meta = serde_json::to_value(Metadata {
            objective: self.objective,
            spec: self.spec.clone(),
            config: self.config.clone(),
            normalizer: self.normalizer.clone(),
            history: self.history.clone(),
            seed: self.config.seed,
        })
        .map_err(|e| TrainError::Metadata(e.to_string()))?;
        write_checkpoint(w, &self.params, &meta)?;
        Ok(())
    }

    pub fn load<R: Read>(r: R) -> Result<Self, TrainError> {
        let (params, meta) = read_checkpoint(r)?;
        let meta: Metadata = serde_json::from_value(meta).map_err(|e| TrainError::Metadata(e.to_string()))?;
        Ok(Self {
            objective: meta.objective,
            spec: meta.spec,
            params,
            config: meta.config,
            normalizer: meta.normalizer,
            history: meta.history,
        })
    }

    /// Writes `epoch,d_loss,g_loss,train_rmse`.
    pub fn write_history_csv<W: Write>(&self, mut w: W) -> std::io::Result<()> {
        writeln!(w, "epoch,d_loss,g_loss,train_rmse")?;
        for r in &self.history {
            let d = r.d_loss.map(|v| v.to_string()).unwrap_or_default();
            writeln!(w, "{},{},{},{}", r.epoch, d, r.g_loss, r.train_rmse)?;
        }
        Ok(())
    }
}

/// Per-segment normalized predictions, `H` values each.
pub fn predict(model: &TrainedModel, segments: &SegmentSet) -> Result<Vec<Vec<f64>>, NeuralError> {
    predict_with(&model.spec, &model.params, segments)
}

pub fn predict_with(spec: &ModelSpec, params: &ModelParams, segments: &SegmentSet) -> Result<Vec<Vec<f64>>, NeuralError> {
    if segments.window != spec.window() || segments.features != spec.features() || segments.horizon != spec.horizon() {
        return Err(NeuralError::shape(
            "predict",
            format!(
                "segments are {}x{} -> {}, model expects {}x{} -> {}",
                segments.window,
                segments.features,
                segments.horizon,
                spec.window(),
                spec.features(),
                spec.horizon()
            ),
        ));
    }
    if segments.is_empty() {
        return Ok(Vec::new());
    }
    let windows: Vec<&Array2<f64>> = segments.segments.iter().map(|s| &s.inputs).collect();
    let out = spec.predict(params, &windows)?;
    Ok(out.outer_iter().map(|r| r.to_vec()).collect())
}

/// RMSE in price units of pooled predictions against segment targets.
pub fn price_rmse(normalizer: &Normalizer, segments: &SegmentSet, predictions: &[Vec<f64>]) -> Result<f64, MarketDataError> {
    let real: Vec<f64> = segments.segments.iter().flat_map(|s| s.target.iter().copied()).collect();
    let pred: Vec<f64> = predictions.iter().flatten().copied().collect();
    let real = normalizer.denormalize_close(&real)?;
    let pred = normalizer.denormalize_close(&pred)?;
    let n = real.len().max(1) as f64;
    Ok((real.iter().zip(&pred).map(|(a, b)| (a - b) * (a - b)).sum::<f64>() / n).sqrt())
}

/// Called after each epoch with the epoch summary and current forecaster weights.
pub type EpochObserver<'a> = dyn FnMut(&EpochRecord, &ModelSpec, &ModelParams) + 'a;

/// Trains `objective` on `segments`. Deterministic for a fixed `config.seed`.
pub fn train(
    objective: Objective,
    segments: &SegmentSet,
    config: &TrainConfig,
    arch: &ArchConfig,
    normalizer: &Normalizer,
) -> Result<TrainedModel, TrainError> {
    train_with_observer(objective, segments, config, arch, normalizer, &mut |_, _, _| {})
}

pub fn train_with_observer(
    objective: Objective,
    segments: &SegmentSet,
    config: &TrainConfig,
    arch: &ArchConfig,
    normalizer: &Normalizer,
    observer: &mut EpochObserver<'_>,
) -> Result<TrainedModel, TrainError> {
    config.validate()?;
    if segments.is_empty() {
        return Err(TrainError::Config("no training segments".into()));
    }
    let (window, features, horizon) = (segments.window, segments.features, segments.horizon);
    let spec = arch.forecaster(objective, window, features, horizon);
    let dcfg = arch.discriminator(window, horizon);

    let mut rng = ChaCha8Rng::seed_from_u64(config.seed);
    let mut params = spec.init_params(&mut rng)?;
    let mut critic = if objective.is_adversarial() {
        Some(dcfg.init_params(&mut rng)?)
    } else {
        None
    };
    let mut adam_g = Adam::new(config.adam(), &params);
    let mut adam_d = critic.as_ref().map(|c| Adam::new(config.adam(), c));
    let penalty = PenaltyConfig {
        lambda1: config.lambda1,
        k: config.k,
        c: config.c,
        noise: config.noise_scale,
    };
    let d_steps = config.d_steps(objective);

    let mut history = Vec::with_capacity(config.epochs);
    let mut order: Vec<usize> = (0..segments.len()).collect();
    for epoch in 1..=config.epochs {
        order.shuffle(&mut rng);
        let (mut d_sum, mut g_sum, mut batches) = (0.0, 0.0, 0usize);
        for (bi, idx) in order.chunks(config.batch_size).enumerate() {
            if idx.len() < 2 {
                continue;
            }
            let batch = segments.select(idx);
            let fail = |loss: &'static str| {
                move |e: TrainError| match e {
                    TrainError::Neural(n @ (NeuralError::NonFinite { .. } | NeuralError::NonFiniteGrad { .. })) => {
                        TrainError::NonFinite {
                            epoch,
                            batch: bi,
                            loss,
                            detail: n.to_string(),
                        }
                    }
                    other => other,
                }
            };
            match (&mut critic, &mut adam_d) {
                (Some(cp), Some(ad)) => {
                    let windows: Vec<&Array2<f64>> = batch.iter().map(|s| &s.inputs).collect();
                    let fake_pred = spec.predict(&params, &windows).map_err(|e| fail("g_forward")(e.into()))?;
                    let mut d_loss = 0.0;
                    for _ in 0..d_steps {
                        d_loss = critic_step(objective, &dcfg, cp, ad, &batch, &fake_pred, &penalty, &mut rng)
                            .map_err(fail("d_loss"))?;
                    }
                    let g_loss = generator_step(objective, &spec, &mut params, &mut adam_g, &dcfg, cp, &batch, config.lambda2)
                        .map_err(fail("g_loss"))?;
                    d_sum += d_loss;
                    g_sum += g_loss;
                }
                _ => {
                    g_sum += regression_step(&spec, &mut params, &mut adam_g, &batch).map_err(fail("mse"))?;
                }
            }
            batches += 1;
        }
        let preds = predict_with(&spec, &params, segments).map_err(|e| match e {
            n @ (NeuralError::NonFinite { .. } | NeuralError::NonFiniteGrad { .. }) => TrainError::NonFinite {
                epoch,
                batch: batches,
                loss: "train_rmse",
                detail: n.to_string(),
            },
            other => other.into(),
        })?;
        let train_rmse = price_rmse(normalizer, segments, &preds)?;
        let denom = batches.max(1) as f64;
        let record = EpochRecord {
            epoch,
            d_loss: objective.is_adversarial().then_some(d_sum / denom),
            g_loss: g_sum / denom,
            train_rmse,
        };
        log::debug!("{objective} epoch {epoch}: {record:?}");
        observer(&record, &spec, &params);
        history.push(record);
    }

    Ok(TrainedModel {
        objective,
        spec,
        params,
        config: config.clone(),
        normalizer: normalizer.clone(),
        history,
    })
}

#[allow(clippy::too_many_arguments)]
fn critic_step(
    objective: Objective,
    dcfg: &DiscriminatorConfig,
    critic: &mut ModelParams,
    adam: &mut Adam,
    batch: &[&Segment],
    fake_pred: &Array2<f64>,
    penalty: &PenaltyConfig,
    rng: &mut ChaCha8Rng,
) -> Result<f64, TrainError> {
    let mut g = Graph::new();
    let d = Discriminator::bind(&mut g, dcfg, critic);
    let pred = g.leaf(fake_pred.clone());
    let cond = condition_batch(&mut g, batch, pred)?;
    let cost = match objective {
        Objective::DraganFm => discriminator_cost(&mut g, &d, &cond, penalty, rng)?.total,
        Objective::WganGp => wgan_gp_discriminator_cost(&mut g, &d, &cond, penalty.lambda1, rng)?.total,
        Objective::BasicGan => {
            let real = d.critique(&mut g, cond.real)?;
            let fake = d.critique(&mut g, cond.fake)?;
            basic_gan_losses(&mut g, real.score, fake.score)?.0
        }
        Objective::Lstm => unreachable!("regression has no critic"),
    };
    g.check()?;
    let value = g.scalar(cost);
    let grads = d.vars.grads(&mut g, cost)?;
    g.check()?;
    adam.step(critic, &grads)?;
    Ok(value)
}

#[allow(clippy::too_many_arguments)]
fn generator_step(
    objective: Objective,
    spec: &ModelSpec,
    params: &mut ModelParams,
    adam: &mut Adam,
    dcfg: &DiscriminatorConfig,
    critic: &ModelParams,
    batch: &[&Segment],
    lambda2: f64,
) -> Result<f64, TrainError> {
    let mut g = Graph::new();
    let bound = params.bind(&mut g);
    let windows: Vec<&Array2<f64>> = batch.iter().map(|s| &s.inputs).collect();
    let pred = spec.forward(&mut g, &bound, &windows)?;
    let cond = condition_batch(&mut g, batch, pred)?;
    let d = Discriminator::bind(&mut g, dcfg, critic);
    let cost = match objective {
        Objective::DraganFm => generator_cost(&mut g, &d, &cond, lambda2)?.total,
        Objective::WganGp => {
            let fake = d.critique(&mut g, cond.fake)?;
            let m = g.mean_all(fake.score);
            g.neg(m)
        }
        Objective::BasicGan => {
            let real = d.critique(&mut g, cond.real)?;
            let fake = d.critique(&mut g, cond.fake)?;
            basic_gan_losses(&mut g, real.score, fake.score)?.1
        }
        Objective::Lstm => unreachable!("regression has no critic"),
    };
    g.check()?;
    let value = g.scalar(cost);
    let grads = bound.grads(&mut g, cost)?;
    g.check()?;
    adam.step(params, &grads)?;
    Ok(value)
}

/// Mean squared error of predictions against targets (normalized units).
pub fn mse_loss(g: &mut Graph, prediction: crate::neural::Var, batch: &[&Segment]) -> Result<crate::neural::Var, NeuralError> {
    let (b, h) = g.shape(prediction);
    if b != batch.len() || batch.iter().any(|s| s.target.len() != h) {
        return Err(NeuralError::shape("mse", format!("prediction {:?}", (b, h))));
    }
    let target = g.leaf(Array2::from_shape_fn((b, h), |(i, j)| batch[i].target[j]));
    let d = g.sub(prediction, target);
    let sq = g.square(d);
    Ok(g.mean_all(sq))
}

fn regression_step(spec: &ModelSpec, params: &mut ModelParams, adam: &mut Adam, batch: &[&Segment]) -> Result<f64, TrainError> {
    let mut g = Graph::new();
    let bound = params.bind(&mut g);
    let windows: Vec<&Array2<f64>> = batch.iter().map(|s| &s.inputs).collect();
    let pred = spec.forward(&mut g, &bound, &windows)?;
    let loss = mse_loss(&mut g, pred, batch)?;
    g.check()?;
    let value = g.scalar(loss);
    let grads = bound.grads(&mut g, loss)?;
    g.check()?;
    adam.step(params, &grads)?;
    Ok(value)
}
