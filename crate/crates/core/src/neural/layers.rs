//! Layer forward passes recorded on a [`Graph`].
//!
//! Sequences are batched: a sequence of length `T` is a slice of `T` nodes,
//! each `B x features`.

use std::rc::Rc;

use serde::{Deserialize, Serialize};

use super::graph::{Graph, Var};
use super::params::BoundParams;
use super::NeuralError;

#[derive(Debug, Clone, Copy, PartialEq, Serialize, Deserialize)]
#[serde(rename_all = "snake_case")]
pub enum Activation {
    Linear,
    LeakyRelu(f64),
    Tanh,
    Sigmoid,
}

impl Activation {
    pub fn apply(self, g: &mut Graph, x: Var) -> Var {
        match self {
            Activation::Linear => x,
            Activation::LeakyRelu(s) => g.leaky_relu(x, s),
            Activation::Tanh => g.tanh(x),
            Activation::Sigmoid => g.sigmoid(x),
        }
    }
}

/// `act(x W + b)`.
pub fn dense(g: &mut Graph, x: Var, w: Var, b: Var, act: Activation) -> Result<Var, NeuralError> {
    let (xs, ws, bs) = (g.shape(x), g.shape(w), g.shape(b));
    if xs.1 != ws.0 || bs != (1, ws.1) {
        return Err(NeuralError::shape(
            "dense",
            format!("input {xs:?}, weight {ws:?}, bias {bs:?}"),
        ));
    }
    let h = g.matmul(x, w);
    let h = g.add_row(h, b);
    Ok(act.apply(g, h))
}

/// GRU gate parameters. `W*` map inputs, `U*` map the previous state.
#[derive(Debug, Clone, Copy)]
pub struct GruVars {
    pub wz: Var,
    pub uz: Var,
    pub bz: Var,
    pub wr: Var,
    pub ur: Var,
    pub br: Var,
    pub wh: Var,
    pub uh: Var,
    pub bh: Var,
}

impl GruVars {
    pub fn from_bound(b: &BoundParams, prefix: &str) -> Result<Self, NeuralError> {
        let v = |s: &str| b.var(&format!("{prefix}.{s}"));
        Ok(Self {
            wz: v("Wz")?,
            uz: v("Uz")?,
            bz: v("bz")?,
            wr: v("Wr")?,
            ur: v("Ur")?,
            br: v("br")?,
            wh: v("Wh")?,
            uh: v("Uh")?,
            bh: v("bh")?,
        })
    }

    pub fn units(&self, g: &Graph) -> usize {
        g.shape(self.uz).0
    }

    pub fn inputs(&self, g: &Graph) -> usize {
        g.shape(self.wz).0
    }
}

fn affine2(g: &mut Graph, x: Var, w: Var, h: Var, u: Var, b: Var) -> Var {
    let a = g.matmul(x, w);
    let c = g.matmul(h, u);
    let s = g.add(a, c);
    g.add_row(s, b)
}

/// Runs a GRU over `xs`:
///
/// ```text
/// z = σ(x Wz + h Uz + bz)
/// r = σ(x Wr + h Ur + br)
/// ĥ = tanh(x Wh + (r ⊙ h) Uh + bh)
/// h' = (1 - z) ⊙ h + z ⊙ ĥ
/// ```
pub fn gru_forward(g: &mut Graph, xs: &[Var], p: &GruVars, h0: Var) -> Result<Vec<Var>, NeuralError> {
    let units = p.units(g);
    let inputs = p.inputs(g);
    let mut h = h0;
    if g.shape(h0).1 != units {
        return Err(NeuralError::shape("gru", format!("h0 {:?} vs {units} units", g.shape(h0))));
    }
    let mut out = Vec::with_capacity(xs.len());
    for &x in xs {
        let (b, m) = g.shape(x);
        if m != inputs || b != g.shape(h).0 {
            return Err(NeuralError::shape(
                "gru",
                format!("step input {:?}, expected (_, {inputs}) with batch {}", (b, m), g.shape(h).0),
            ));
        }
        let z = affine2(g, x, p.wz, h, p.uz, p.bz);
        let z = g.sigmoid(z);
        let r = affine2(g, x, p.wr, h, p.ur, p.br);
        let r = g.sigmoid(r);
        let rh = g.mul(r, h);
        let cand = affine2(g, x, p.wh, rh, p.uh, p.bh);
        let cand = g.tanh(cand);
        // h' = h + z ⊙ (ĥ - h)
        let diff = g.sub(cand, h);
        let step = g.mul(z, diff);
        h = g.add(h, step);
        out.push(h);
    }
    Ok(out)
}

/// LSTM gate parameters for one direction.
#[derive(Debug, Clone, Copy)]
pub struct LstmVars {
    pub wi: Var,
    pub ui: Var,
    pub bi: Var,
    pub wf: Var,
    pub uf: Var,
    pub bf: Var,
    pub wg: Var,
    pub ug: Var,
    pub bg: Var,
    pub wo: Var,
    pub uo: Var,
    pub bo: Var,
}

impl LstmVars {
    pub fn from_bound(b: &BoundParams, prefix: &str) -> Result<Self, NeuralError> {
        let v = |s: &str| b.var(&format!("{prefix}.{s}"));
        Ok(Self {
            wi: v("Wi")?,
            ui: v("Ui")?,
            bi: v("bi")?,
            wf: v("Wf")?,
            uf: v("Uf")?,
            bf: v("bf")?,
            wg: v("Wg")?,
            ug: v("Ug")?,
            bg: v("bg")?,
            wo: v("Wo")?,
            uo: v("Uo")?,
            bo: v("bo")?,
        })
    }

    pub fn units(&self, g: &Graph) -> usize {
        g.shape(self.ui).0
    }
}

/// Single-direction LSTM. With `reverse`, steps run from last to first; the
/// returned states are always in input order.
pub fn lstm_forward(g: &mut Graph, xs: &[Var], p: &LstmVars, reverse: bool) -> Result<Vec<Var>, NeuralError> {
    let units = p.units(g);
    let inputs = g.shape(p.wi).0;
    let batch = match xs.first() {
        Some(&x) => g.shape(x).0,
        None => return Ok(Vec::new()),
    };
    let mut h = g.zeros(batch, units);
    let mut c = g.zeros(batch, units);
    let mut out = vec![h; xs.len()];
    let order: Vec<usize> = if reverse {
        (0..xs.len()).rev().collect()
    } else {
        (0..xs.len()).collect()
    };
    for t in order {
        let x = xs[t];
        if g.shape(x) != (batch, inputs) {
            return Err(NeuralError::shape(
                "lstm",
                format!("step input {:?}, expected ({batch}, {inputs})", g.shape(x)),
            ));
        }
        let i = affine2(g, x, p.wi, h, p.ui, p.bi);
        let i = g.sigmoid(i);
        let f = affine2(g, x, p.wf, h, p.uf, p.bf);
        let f = g.sigmoid(f);
        let cand = affine2(g, x, p.wg, h, p.ug, p.bg);
        let cand = g.tanh(cand);
        let o = affine2(g, x, p.wo, h, p.uo, p.bo);
        let o = g.sigmoid(o);
        let fc = g.mul(f, c);
        let ic = g.mul(i, cand);
        c = g.add(fc, ic);
        let tc = g.tanh(c);
        h = g.mul(o, tc);
        out[t] = h;
    }
    Ok(out)
}

/// Forward and backward LSTM outputs concatenated per step (`B x 2U`).
pub fn bilstm_forward(g: &mut Graph, xs: &[Var], fwd: &LstmVars, bwd: &LstmVars) -> Result<Vec<Var>, NeuralError> {
    let f = lstm_forward(g, xs, fwd, false)?;
    let b = lstm_forward(g, xs, bwd, true)?;
    Ok(f.into_iter().zip(b).map(|(a, b)| g.concat_cols(a, b)).collect())
}

/// Stride-1, zero "same"-padded 1-D cross-correlation.
///
/// `x` holds `batch` sequences of length `len` stacked row-wise
/// (`(batch·len) x C`). `kernel` is `(K·C) x C_out` with row `k·C + c`
/// weighting channel `c` at tap `k`; tap `k` reads position `t + k - (K-1)/2`.
pub fn conv1d_forward(
    g: &mut Graph,
    x: Var,
    batch: usize,
    len: usize,
    kernel: Var,
    bias: Var,
    act: Activation,
) -> Result<Var, NeuralError> {
    let (rows, ch) = g.shape(x);
    if rows != batch * len || len == 0 {
        return Err(NeuralError::shape(
            "conv1d",
            format!("input {:?} is not ({batch}·{len}) x C", (rows, ch)),
        ));
    }
    let (kr, cout) = g.shape(kernel);
    if kr == 0 || kr % ch != 0 {
        return Err(NeuralError::shape(
            "conv1d",
            format!("kernel rows {kr} not a multiple of {ch} channels"),
        ));
    }
    let k = kr / ch;
    let pad = (k - 1) / 2;
    if k > len + (k - 1) {
        return Err(NeuralError::shape("conv1d", format!("kernel {k} longer than padded input")));
    }
    if g.shape(bias) != (1, cout) {
        return Err(NeuralError::shape("conv1d", format!("bias {:?}", g.shape(bias))));
    }
    let mut map = Vec::with_capacity(rows * kr);
    for b in 0..batch {
        for t in 0..len {
            for tap in 0..k {
                let src = t as isize + tap as isize - pad as isize;
                for c in 0..ch {
                    map.push(if src >= 0 && (src as usize) < len {
                        Some((b * len + src as usize) * ch + c)
                    } else {
                        None
                    });
                }
            }
        }
    }
    let cols = g.gather(x, Rc::new(map), rows, kr);
    let y = g.matmul(cols, kernel);
    let y = g.add_row(y, bias);
    Ok(act.apply(g, y))
}
