//! Generator, critic and recurrent regressor architectures.

use ndarray::Array2;
use rand::Rng;
use serde::{Deserialize, Serialize};

use super::graph::{Graph, Var};
use super::layers::{conv1d_forward, dense, gru_forward, lstm_forward, Activation, GruVars, LstmVars};
use super::params::{BoundParams, ModelParams};
use super::NeuralError;

fn init_scale(fan_in: usize) -> f64 {
    1.0 / (fan_in.max(1) as f64).sqrt()
}

/// GRU stack followed by dense layers, mapping an `N x M` window to `H` values.
#[derive(Debug, Clone, PartialEq, Serialize, Deserialize)]
pub struct GeneratorConfig {
    pub window: usize,
    pub features: usize,
    pub horizon: usize,
    pub gru_units: Vec<usize>,
    /// Widths of the dense head; the last entry equals `horizon`.
    pub dense_units: Vec<usize>,
    pub leaky_slope: f64,
}

impl GeneratorConfig {
    /// GRU(256) → GRU(128) → dense(64) → dense(H).
    pub fn standard(window: usize, features: usize, horizon: usize) -> Self {
        Self {
            window,
            features,
            horizon,
            gru_units: vec![256, 128],
            dense_units: vec![64, horizon],
            leaky_slope: 0.2,
        }
    }

    pub fn validate(&self) -> Result<(), NeuralError> {
        if self.window == 0 || self.features == 0 || self.horizon == 0 {
            return Err(NeuralError::Parameter("generator dims must be positive".into()));
        }
        if self.gru_units.is_empty() || self.gru_units.contains(&0) {
            return Err(NeuralError::Parameter("generator needs positive GRU widths".into()));
        }
        if self.dense_units.last() != Some(&self.horizon) || self.dense_units.contains(&0) {
            return Err(NeuralError::Parameter(format!(
                "generator dense widths {:?} must be positive and end in horizon {}",
                self.dense_units, self.horizon
            )));
        }
        Ok(())
    }

    pub fn init_params<R: Rng>(&self, rng: &mut R) -> Result<ModelParams, NeuralError> {
        self.validate()?;
        let mut p = ModelParams::new();
        let mut input = self.features;
        for (l, &units) in self.gru_units.iter().enumerate() {
            let name = format!("gru{}", l + 1);
            for gate in ["z", "r", "h"] {
                p.insert_uniform(format!("{name}.W{gate}"), input, units, init_scale(input), rng)?;
                p.insert_uniform(format!("{name}.U{gate}"), units, units, init_scale(units), rng)?;
                p.insert_uniform(format!("{name}.b{gate}"), 1, units, init_scale(units), rng)?;
            }
            input = units;
        }
        for (l, &units) in self.dense_units.iter().enumerate() {
            let name = format!("dense{}", l + 1);
            p.insert_uniform(format!("{name}.W"), input, units, init_scale(input), rng)?;
            p.insert_uniform(format!("{name}.b"), 1, units, init_scale(input), rng)?;
            input = units;
        }
        Ok(p)
    }
}

/// One `B x M` leaf per time step from a batch of `N x M` windows.
pub fn window_steps(g: &mut Graph, windows: &[&Array2<f64>], window: usize, features: usize) -> Result<Vec<Var>, NeuralError> {
    if windows.is_empty() {
        return Err(NeuralError::shape("window batch", "empty batch"));
    }
    for w in windows {
        if w.dim() != (window, features) {
            return Err(NeuralError::shape(
                "window batch",
                format!("window {:?}, expected ({window}, {features})", w.dim()),
            ));
        }
    }
    Ok((0..window)
        .map(|t| {
            let step = Array2::from_shape_fn((windows.len(), features), |(b, m)| windows[b][[t, m]]);
            g.leaf(step)
        })
        .collect())
}

/// Generator forward pass: returns the `B x H` predictions.
pub fn generator_forward(
    g: &mut Graph,
    params: &BoundParams,
    cfg: &GeneratorConfig,
    windows: &[&Array2<f64>],
) -> Result<Var, NeuralError> {
    let steps = window_steps(g, windows, cfg.window, cfg.features)?;
    generator_forward_steps(g, params, cfg, &steps)
}

pub fn generator_forward_steps(
    g: &mut Graph,
    params: &BoundParams,
    cfg: &GeneratorConfig,
    steps: &[Var],
) -> Result<Var, NeuralError> {
    let batch = g.shape(steps[0]).0;
    let mut seq = steps.to_vec();
    for l in 0..cfg.gru_units.len() {
        let vars = GruVars::from_bound(params, &format!("gru{}", l + 1))?;
        let h0 = g.zeros(batch, vars.units(g));
        seq = gru_forward(g, &seq, &vars, h0)?;
    }
    let mut h = *seq.last().expect("window >= 1");
    let last = cfg.dense_units.len();
    for l in 0..last {
        let w = params.var(&format!("dense{}.W", l + 1))?;
        let b = params.var(&format!("dense{}.b", l + 1))?;
        let act = if l + 1 == last {
            Activation::Linear
        } else {
            Activation::LeakyRelu(cfg.leaky_slope)
        };
        h = dense(g, h, w, b, act)?;
    }
    Ok(h)
}

/// Convolutional critic over a conditioned close vector of length `N + H`.
#[derive(Debug, Clone, PartialEq, Serialize, Deserialize)]
pub struct DiscriminatorConfig {
    pub input_length: usize,
    pub conv_channels: Vec<usize>,
    pub kernel_size: usize,
    /// Widths of the dense head; the last entry is 1.
    pub dense_units: Vec<usize>,
    pub leaky_slope: f64,
    /// 1-based index of the convolution whose flattened output is the
    /// feature-matching representation.
    pub feature_tap: usize,
}

impl DiscriminatorConfig {
    /// conv(32) → conv(64) → conv(128) → dense(64) → dense(1), kernel 3.
    pub fn standard(input_length: usize) -> Self {
        Self {
            input_length,
            conv_channels: vec![32, 64, 128],
            kernel_size: 3,
            dense_units: vec![64, 1],
            leaky_slope: 0.2,
            feature_tap: 3,
        }
    }

    pub fn validate(&self) -> Result<(), NeuralError> {
        if self.input_length == 0 || self.kernel_size == 0 {
            return Err(NeuralError::Parameter("critic dims must be positive".into()));
        }
        if self.conv_channels.is_empty() || self.conv_channels.contains(&0) {
            return Err(NeuralError::Parameter("critic needs positive conv widths".into()));
        }
        if self.dense_units.last() != Some(&1) || self.dense_units.contains(&0) {
            return Err(NeuralError::Parameter(format!(
                "critic dense widths {:?} must end in 1",
                self.dense_units
            )));
        }
        if self.feature_tap == 0 || self.feature_tap > self.conv_channels.len() {
            return Err(NeuralError::Parameter(format!(
                "feature tap {} outside 1..={}",
                self.feature_tap,
                self.conv_channels.len()
            )));
        }
        Ok(())
    }

    pub fn init_params<R: Rng>(&self, rng: &mut R) -> Result<ModelParams, NeuralError> {
        self.validate()?;
        let mut p = ModelParams::new();
        let mut ch = 1;
        for (l, &out) in self.conv_channels.iter().enumerate() {
            let fan_in = self.kernel_size * ch;
            let name = format!("conv{}", l + 1);
            p.insert_uniform(format!("{name}.kernel"), fan_in, out, init_scale(fan_in), rng)?;
            p.insert_uniform(format!("{name}.bias"), 1, out, init_scale(fan_in), rng)?;
            ch = out;
        }
        let mut input = self.input_length * ch;
        for (l, &units) in self.dense_units.iter().enumerate() {
            let name = format!("dense{}", l + 1);
            p.insert_uniform(format!("{name}.W"), input, units, init_scale(input), rng)?;
            p.insert_uniform(format!("{name}.b"), 1, units, init_scale(input), rng)?;
            input = units;
        }
        Ok(p)
    }
}

/// Critic score per row plus the intermediate features used for matching.
#[derive(Debug, Clone, Copy)]
pub struct CriticOutput {
    /// `B x 1` unbounded scores.
    pub score: Var,
    /// `B x F` intermediate representation.
    pub features: Var,
}

/// Anything that scores a batch of conditioned inputs (`B x L`).
pub trait Critic {
    fn critique(&self, g: &mut Graph, x: Var) -> Result<CriticOutput, NeuralError>;
}

/// The convolutional critic bound to a graph.
#[derive(Debug, Clone)]
pub struct Discriminator {
    pub config: DiscriminatorConfig,
    pub vars: BoundParams,
}

impl Discriminator {
    pub fn bind(g: &mut Graph, config: &DiscriminatorConfig, params: &ModelParams) -> Self {
        Self {
            config: config.clone(),
            vars: params.bind(g),
        }
    }
}

impl Critic for Discriminator {
    fn critique(&self, g: &mut Graph, x: Var) -> Result<CriticOutput, NeuralError> {
        discriminator_forward(g, &self.vars, &self.config, x)
    }
}

/// Critic forward pass on a `B x (N+H)` batch.
pub fn discriminator_forward(
    g: &mut Graph,
    params: &BoundParams,
    cfg: &DiscriminatorConfig,
    x: Var,
) -> Result<CriticOutput, NeuralError> {
    let (batch, len) = g.shape(x);
    if len != cfg.input_length {
        return Err(NeuralError::shape(
            "discriminator",
            format!("input length {len}, expected {}", cfg.input_length),
        ));
    }
    let act = Activation::LeakyRelu(cfg.leaky_slope);
    let mut h = g.reshape(x, batch * len, 1);
    let mut features = None;
    for l in 0..cfg.conv_channels.len() {
        let k = params.var(&format!("conv{}.kernel", l + 1))?;
        let b = params.var(&format!("conv{}.bias", l + 1))?;
        h = conv1d_forward(g, h, batch, len, k, b, act)?;
        if l + 1 == cfg.feature_tap {
            let ch = g.shape(h).1;
            features = Some(g.reshape(h, batch, len * ch));
        }
    }
    let ch = g.shape(h).1;
    let mut h = g.reshape(h, batch, len * ch);
    let last = cfg.dense_units.len();
    for l in 0..last {
        let w = params.var(&format!("dense{}.W", l + 1))?;
        let b = params.var(&format!("dense{}.b", l + 1))?;
        let a = if l + 1 == last { Activation::Linear } else { act };
        h = dense(g, h, w, b, a)?;
    }
    Ok(CriticOutput {
        score: h,
        features: features.expect("validated tap"),
    })
}

/// Bidirectional LSTM regressor: final states of both directions → dense(H).
#[derive(Debug, Clone, PartialEq, Serialize, Deserialize)]
pub struct BiLstmConfig {
    pub window: usize,
    pub features: usize,
    pub horizon: usize,
    pub units: usize,
}

impl BiLstmConfig {
    pub fn standard(window: usize, features: usize, horizon: usize) -> Self {
        Self {
            window,
            features,
            horizon,
            units: 128,
        }
    }

    pub fn init_params<R: Rng>(&self, rng: &mut R) -> Result<ModelParams, NeuralError> {
        if self.window == 0 || self.features == 0 || self.horizon == 0 || self.units == 0 {
            return Err(NeuralError::Parameter("lstm dims must be positive".into()));
        }
        let mut p = ModelParams::new();
        for dir in ["lstm_fwd", "lstm_bwd"] {
            for gate in ["i", "f", "g", "o"] {
                p.insert_uniform(format!("{dir}.W{gate}"), self.features, self.units, init_scale(self.features), rng)?;
                p.insert_uniform(format!("{dir}.U{gate}"), self.units, self.units, init_scale(self.units), rng)?;
                p.insert_uniform(format!("{dir}.b{gate}"), 1, self.units, init_scale(self.units), rng)?;
            }
        }
        let width = 2 * self.units;
        p.insert_uniform("dense.W", width, self.horizon, init_scale(width), rng)?;
        p.insert_uniform("dense.b", 1, self.horizon, init_scale(width), rng)?;
        Ok(p)
    }
}

pub fn bilstm_regressor_forward(
    g: &mut Graph,
    params: &BoundParams,
    cfg: &BiLstmConfig,
    windows: &[&Array2<f64>],
) -> Result<Var, NeuralError> {
    let steps = window_steps(g, windows, cfg.window, cfg.features)?;
    let fwd = LstmVars::from_bound(params, "lstm_fwd")?;
    let bwd = LstmVars::from_bound(params, "lstm_bwd")?;
    let f = lstm_forward(g, &steps, &fwd, false)?;
    let b = lstm_forward(g, &steps, &bwd, true)?;
    let last = g.concat_cols(*f.last().expect("window >= 1"), b[0]);
    dense(
        g,
        last,
        params.var("dense.W")?,
        params.var("dense.b")?,
        Activation::Linear,
    )
}

/// A forecasting network: the GAN generator or the LSTM baseline.
#[derive(Debug, Clone, PartialEq, Serialize, Deserialize)]
#[serde(tag = "kind", rename_all = "snake_case")]
pub enum ModelSpec {
    Generator(GeneratorConfig),
    BiLstm(BiLstmConfig),
}

impl ModelSpec {
    pub fn window(&self) -> usize {
        match self {
            ModelSpec::Generator(c) => c.window,
            ModelSpec::BiLstm(c) => c.window,
        }
    }

    pub fn features(&self) -> usize {
        match self {
            ModelSpec::Generator(c) => c.features,
            ModelSpec::BiLstm(c) => c.features,
        }
    }

    pub fn horizon(&self) -> usize {
        match self {
            ModelSpec::Generator(c) => c.horizon,
            ModelSpec::BiLstm(c) => c.horizon,
        }
    }

    pub fn init_params<R: Rng>(&self, rng: &mut R) -> Result<ModelParams, NeuralError> {
        match self {
            ModelSpec::Generator(c) => c.init_params(rng),
            ModelSpec::BiLstm(c) => c.init_params(rng),
        }
    }

    pub fn forward(
        &self,
        g: &mut Graph,
        params: &BoundParams,
        windows: &[&Array2<f64>],
    ) -> Result<Var, NeuralError> {
        match self {
            ModelSpec::Generator(c) => generator_forward(g, params, c, windows),
            ModelSpec::BiLstm(c) => bilstm_regressor_forward(g, params, c, windows),
        }
    }

    /// Forward pass without gradients, in chunks; returns `B x H`.
    pub fn predict(&self, params: &ModelParams, windows: &[&Array2<f64>]) -> Result<Array2<f64>, NeuralError> {
        const CHUNK: usize = 256;
        let mut out = Array2::zeros((windows.len(), self.horizon()));
        for (c, chunk) in windows.chunks(CHUNK).enumerate() {
            let mut g = Graph::new();
            let bound = params.bind(&mut g);
            let y = self.forward(&mut g, &bound, chunk)?;
            g.check()?;
            out.slice_mut(ndarray::s![c * CHUNK..c * CHUNK + chunk.len(), ..])
                .assign(g.value(y));
        }
        Ok(out)
    }
}
