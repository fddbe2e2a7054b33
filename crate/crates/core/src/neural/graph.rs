//! Reverse-mode differentiation over 2-D `f64` matrices.
//!
//! Every node is appended to a flat arena, so parents always precede
//! children. Gradients are themselves recorded as graph nodes, which lets
//! a gradient be differentiated again. Gradient penalties on a critic's
//! input-gradient norm rely on this.

use std::rc::Rc;

use ndarray::{Array2, Axis};

use super::NeuralError;

/// Handle to a node in a [`Graph`].
#[derive(Debug, Clone, Copy, PartialEq, Eq, Hash, PartialOrd, Ord)]
pub struct Var(usize);

impl Var {
    pub fn index(self) -> usize {
        self.0
    }
}

/// Flat index map for [`Graph::gather`]: output element `j` reads input
/// element `map[j]`, or zero for `None`.
pub type IndexMap = Rc<Vec<Option<usize>>>;

#[derive(Debug, Clone)]
enum Op {
    Leaf,
    MatMul(Var, Var),
    Transpose(Var),
    Add(Var, Var),
    AddRow(Var, Var),
    Sub(Var, Var),
    Mul(Var, Var),
    Scale(Var, f64),
    AddScalar(Var),
    Sigmoid(Var),
    Tanh(Var),
    LeakyRelu(Var, f64),
    Log(Var),
    ClampMin(Var, f64),
    Sqrt(Var),
    RecipSafe(Var),
    SumAll(Var),
    BroadcastScalar(Var),
    SumRows(Var),
    BroadcastRows(Var),
    SumCols(Var),
    BroadcastCols(Var),
    Reshape(Var),
    Gather(Var, IndexMap),
    ScatterAdd(Var, IndexMap),
    ConcatCols(Var, Var),
}

impl Op {
    fn parents(&self) -> [Option<Var>; 2] {
        use Op::*;
        match *self {
            Leaf => [None, None],
            MatMul(a, b) | Add(a, b) | AddRow(a, b) | Sub(a, b) | Mul(a, b) | ConcatCols(a, b) => [Some(a), Some(b)],
            Transpose(a)
            | Scale(a, _)
            | AddScalar(a)
            | Sigmoid(a)
            | Tanh(a)
            | LeakyRelu(a, _)
            | Log(a)
            | ClampMin(a, _)
            | Sqrt(a)
            | RecipSafe(a)
            | SumAll(a)
            | BroadcastScalar(a)
            | SumRows(a)
            | BroadcastRows(a)
            | SumCols(a)
            | BroadcastCols(a)
            | Reshape(a) => [Some(a), None],
            Gather(a, _) | ScatterAdd(a, _) => [Some(a), None],
        }
    }
}

struct Node {
    value: Array2<f64>,
    op: Op,
}

/// Arena of recorded operations.
#[derive(Default)]
pub struct Graph {
    nodes: Vec<Node>,
    fault: Option<&'static str>,
}

fn sigmoid(x: f64) -> f64 {
    if x >= 0.0 {
        1.0 / (1.0 + (-x).exp())
    } else {
        let e = x.exp();
        e / (1.0 + e)
    }
}

impl Graph {
    pub fn new() -> Self {
        Self::default()
    }

    pub fn len(&self) -> usize {
        self.nodes.len()
    }

    pub fn is_empty(&self) -> bool {
        self.nodes.is_empty()
    }

    fn push(&mut self, op: Op, value: Array2<f64>, name: &'static str) -> Var {
        let value = if value.is_standard_layout() {
            value
        } else {
            value.as_standard_layout().into_owned()
        };
        if self.fault.is_none() && value.iter().any(|v| !v.is_finite()) {
            self.fault = Some(name);
        }
        self.nodes.push(Node { value, op });
        Var(self.nodes.len() - 1)
    }

    /// First operation that produced a non-finite value, if any.
    pub fn check(&self) -> Result<(), NeuralError> {
        match self.fault {
            Some(op) => Err(NeuralError::NonFinite { op: op.to_string() }),
            None => Ok(()),
        }
    }

    pub fn value(&self, v: Var) -> &Array2<f64> {
        &self.nodes[v.0].value
    }

    pub fn shape(&self, v: Var) -> (usize, usize) {
        self.nodes[v.0].value.dim()
    }

    pub fn scalar(&self, v: Var) -> f64 {
        let val = self.value(v);
        assert_eq!(val.dim(), (1, 1), "scalar() on non-scalar node");
        val[[0, 0]]
    }

    /// Leaf node (parameter, input or constant). Whether it receives a
    /// gradient is decided by [`Graph::grad`]'s targets.
    pub fn leaf(&mut self, value: Array2<f64>) -> Var {
        self.push(Op::Leaf, value, "leaf")
    }

    pub fn constant(&mut self, value: Array2<f64>) -> Var {
        self.leaf(value)
    }

    pub fn zeros(&mut self, rows: usize, cols: usize) -> Var {
        self.leaf(Array2::zeros((rows, cols)))
    }

    pub fn matmul(&mut self, a: Var, b: Var) -> Var {
        let (va, vb) = (self.value(a), self.value(b));
        assert_eq!(va.ncols(), vb.nrows(), "matmul: {:?} x {:?}", va.dim(), vb.dim());
        let v = va.dot(vb);
        self.push(Op::MatMul(a, b), v, "matmul")
    }

    pub fn transpose(&mut self, a: Var) -> Var {
        let v = self.value(a).t().as_standard_layout().into_owned();
        self.push(Op::Transpose(a), v, "transpose")
    }

    pub fn add(&mut self, a: Var, b: Var) -> Var {
        assert_eq!(self.shape(a), self.shape(b), "add shape");
        let v = self.value(a) + self.value(b);
        self.push(Op::Add(a, b), v, "add")
    }

    /// `a (r x c) + row (1 x c)` broadcast over rows.
    pub fn add_row(&mut self, a: Var, row: Var) -> Var {
        let (va, vr) = (self.value(a), self.value(row));
        assert!(vr.nrows() == 1 && vr.ncols() == va.ncols(), "add_row shape");
        let v = va + vr;
        self.push(Op::AddRow(a, row), v, "add_row")
    }

    pub fn sub(&mut self, a: Var, b: Var) -> Var {
        assert_eq!(self.shape(a), self.shape(b), "sub shape");
        let v = self.value(a) - self.value(b);
        self.push(Op::Sub(a, b), v, "sub")
    }

    /// Elementwise product.
    pub fn mul(&mut self, a: Var, b: Var) -> Var {
        assert_eq!(self.shape(a), self.shape(b), "mul shape");
        let v = self.value(a) * self.value(b);
        self.push(Op::Mul(a, b), v, "mul")
    }

    pub fn scale(&mut self, a: Var, s: f64) -> Var {
        let v = self.value(a) * s;
        self.push(Op::Scale(a, s), v, "scale")
    }

    pub fn neg(&mut self, a: Var) -> Var {
        self.scale(a, -1.0)
    }

    pub fn add_scalar(&mut self, a: Var, s: f64) -> Var {
        let v = self.value(a) + s;
        self.push(Op::AddScalar(a), v, "add_scalar")
    }

    pub fn square(&mut self, a: Var) -> Var {
        self.mul(a, a)
    }

    pub fn sigmoid(&mut self, a: Var) -> Var {
        let v = self.value(a).mapv(sigmoid);
        self.push(Op::Sigmoid(a), v, "sigmoid")
    }

    pub fn tanh(&mut self, a: Var) -> Var {
        let v = self.value(a).mapv(f64::tanh);
        self.push(Op::Tanh(a), v, "tanh")
    }

    pub fn leaky_relu(&mut self, a: Var, slope: f64) -> Var {
        let v = self.value(a).mapv(|x| if x > 0.0 { x } else { slope * x });
        self.push(Op::LeakyRelu(a, slope), v, "leaky_relu")
    }

    pub fn log(&mut self, a: Var) -> Var {
        let v = self.value(a).mapv(f64::ln);
        self.push(Op::Log(a), v, "log")
    }

    /// `max(a, floor)`; the gradient is zero where the floor is active.
    pub fn clamp_min(&mut self, a: Var, floor: f64) -> Var {
        let v = self.value(a).mapv(|x| x.max(floor));
        self.push(Op::ClampMin(a, floor), v, "clamp_min")
    }

    /// Square root whose derivative is taken as zero at the origin.
    pub fn sqrt(&mut self, a: Var) -> Var {
        let v = self.value(a).mapv(f64::sqrt);
        self.push(Op::Sqrt(a), v, "sqrt")
    }

    /// `1/x`, with `1/0` defined as `0`.
    pub fn recip_safe(&mut self, a: Var) -> Var {
        let v = self.value(a).mapv(|x| if x == 0.0 { 0.0 } else { 1.0 / x });
        self.push(Op::RecipSafe(a), v, "recip")
    }

    pub fn sum_all(&mut self, a: Var) -> Var {
        let s = self.value(a).sum();
        self.push(Op::SumAll(a), Array2::from_elem((1, 1), s), "sum_all")
    }

    pub fn mean_all(&mut self, a: Var) -> Var {
        let n = self.value(a).len() as f64;
        let s = self.sum_all(a);
        self.scale(s, 1.0 / n)
    }

    /// `1 x 1 -> rows x cols`.
    pub fn broadcast_scalar(&mut self, a: Var, rows: usize, cols: usize) -> Var {
        let s = self.scalar(a);
        self.push(Op::BroadcastScalar(a), Array2::from_elem((rows, cols), s), "broadcast_scalar")
    }

    /// `r x c -> 1 x c`.
    pub fn sum_rows(&mut self, a: Var) -> Var {
        let v = self.value(a).sum_axis(Axis(0)).insert_axis(Axis(0));
        self.push(Op::SumRows(a), v, "sum_rows")
    }

    /// `r x c -> 1 x c` mean over rows.
    pub fn mean_rows(&mut self, a: Var) -> Var {
        let n = self.shape(a).0 as f64;
        let s = self.sum_rows(a);
        self.scale(s, 1.0 / n)
    }

    /// `1 x c -> rows x c`.
    pub fn broadcast_rows(&mut self, a: Var, rows: usize) -> Var {
        let va = self.value(a);
        assert_eq!(va.nrows(), 1);
        let v = va.broadcast((rows, va.ncols())).expect("broadcast").to_owned();
        self.push(Op::BroadcastRows(a), v, "broadcast_rows")
    }

    /// `r x c -> r x 1`.
    pub fn sum_cols(&mut self, a: Var) -> Var {
        let v = self.value(a).sum_axis(Axis(1)).insert_axis(Axis(1));
        self.push(Op::SumCols(a), v, "sum_cols")
    }

    /// `r x 1 -> r x cols`.
    pub fn broadcast_cols(&mut self, a: Var, cols: usize) -> Var {
        let va = self.value(a);
        assert_eq!(va.ncols(), 1);
        let v = va.broadcast((va.nrows(), cols)).expect("broadcast").to_owned();
        self.push(Op::BroadcastCols(a), v, "broadcast_cols")
    }

    /// Row-major reshape.
    pub fn reshape(&mut self, a: Var, rows: usize, cols: usize) -> Var {
        let va = self.value(a);
        assert_eq!(va.len(), rows * cols, "reshape size");
        let v = Array2::from_shape_vec((rows, cols), va.iter().copied().collect()).expect("reshape");
        self.push(Op::Reshape(a), v, "reshape")
    }

    /// `out[j] = a[map[j]]` over flat row-major storage.
    pub fn gather(&mut self, a: Var, map: IndexMap, rows: usize, cols: usize) -> Var {
        assert_eq!(map.len(), rows * cols, "gather map size");
        let src = self.value(a).as_slice().expect("standard layout");
        let data: Vec<f64> = map.iter().map(|m| m.map_or(0.0, |i| src[i])).collect();
        let v = Array2::from_shape_vec((rows, cols), data).expect("gather");
        self.push(Op::Gather(a, map), v, "gather")
    }

    /// Adjoint of [`Graph::gather`]: `out[map[j]] += a[j]`.
    pub fn scatter_add(&mut self, a: Var, map: IndexMap, rows: usize, cols: usize) -> Var {
        let src = self.value(a).as_slice().expect("standard layout");
        assert_eq!(map.len(), src.len(), "scatter map size");
        let mut data = vec![0.0; rows * cols];
        for (j, m) in map.iter().enumerate() {
            if let Some(i) = m {
                data[*i] += src[j];
            }
        }
        let v = Array2::from_shape_vec((rows, cols), data).expect("scatter");
        self.push(Op::ScatterAdd(a, map), v, "scatter_add")
    }

    /// Columns `[start, end)`.
    pub fn slice_cols(&mut self, a: Var, start: usize, end: usize) -> Var {
        let (r, c) = self.shape(a);
        assert!(start <= end && end <= c);
        let w = end - start;
        let map: Vec<Option<usize>> = (0..r)
            .flat_map(|i| (start..end).map(move |j| Some(i * c + j)))
            .collect();
        self.gather(a, Rc::new(map), r, w)
    }

    pub fn concat_cols(&mut self, a: Var, b: Var) -> Var {
        let (va, vb) = (self.value(a), self.value(b));
        assert_eq!(va.nrows(), vb.nrows(), "concat rows");
        let v = ndarray::concatenate(Axis(1), &[va.view(), vb.view()]).expect("concat");
        self.push(Op::ConcatCols(a, b), v, "concat_cols")
    }

    /// Gradients of the scalar `out` with respect to each of `wrt`.
    ///
    /// The returned nodes live in this graph and can be differentiated
    /// again. Targets that `out` does not depend on get a zero gradient.
    pub fn grad(&mut self, out: Var, wrt: &[Var]) -> Vec<Var> {
        assert_eq!(self.shape(out), (1, 1), "grad of non-scalar output");
        let n = out.0 + 1;
        let lo = match wrt.iter().map(|v| v.0).min() {
            Some(lo) => lo,
            None => return Vec::new(),
        };
        if lo >= n {
            return wrt
                .iter()
                .map(|&w| {
                    let (r, c) = self.shape(w);
                    self.zeros(r, c)
                })
                .collect();
        }

        // Nodes on some path from a target up to `out`.
        let mut needed = vec![false; n];
        for w in wrt {
            if w.0 < n {
                needed[w.0] = true;
            }
        }
        for i in lo..n {
            if !needed[i] {
                needed[i] = self.nodes[i]
                    .op
                    .parents()
                    .iter()
                    .flatten()
                    .any(|p| p.0 >= lo && needed[p.0]);
            }
        }

        let mut grads: Vec<Option<Var>> = vec![None; n];
        grads[out.0] = Some(self.leaf(Array2::ones((1, 1))));

        for i in (lo..n).rev() {
            if !needed[i] {
                continue;
            }
            let Some(g) = grads[i] else { continue };
            let op = self.nodes[i].op.clone();
            let need = |v: Var| v.0 >= lo && needed[v.0];
            let mut contrib: [Option<(Var, Var)>; 2] = [None, None];
            match op {
                Op::Leaf => {}
                Op::MatMul(a, b) => {
                    if need(a) {
                        let bt = self.transpose(b);
                        contrib[0] = Some((a, self.matmul(g, bt)));
                    }
                    if need(b) {
                        let at = self.transpose(a);
                        contrib[1] = Some((b, self.matmul(at, g)));
                    }
                }
                Op::Transpose(a) => {
                    contrib[0] = Some((a, self.transpose(g)));
                }
                Op::Add(a, b) => {
                    contrib = [Some((a, g)), Some((b, g))];
                }
                Op::AddRow(a, row) => {
                    contrib[0] = Some((a, g));
                    if need(row) {
                        contrib[1] = Some((row, self.sum_rows(g)));
                    }
                }
                Op::Sub(a, b) => {
                    contrib[0] = Some((a, g));
                    if need(b) {
                        contrib[1] = Some((b, self.neg(g)));
                    }
                }
                Op::Mul(a, b) => {
                    if need(a) {
                        contrib[0] = Some((a, self.mul(g, b)));
                    }
                    if need(b) {
                        contrib[1] = Some((b, self.mul(g, a)));
                    }
                }
                Op::Scale(a, s) => contrib[0] = Some((a, self.scale(g, s))),
                Op::AddScalar(a) => contrib[0] = Some((a, g)),
                Op::Sigmoid(a) => {
                    let y = Var(i);
                    let om = self.scale(y, -1.0);
                    let om = self.add_scalar(om, 1.0);
                    let d = self.mul(y, om);
                    contrib[0] = Some((a, self.mul(g, d)));
                }
                Op::Tanh(a) => {
                    let y = Var(i);
                    let y2 = self.square(y);
                    let d = self.scale(y2, -1.0);
                    let d = self.add_scalar(d, 1.0);
                    contrib[0] = Some((a, self.mul(g, d)));
                }
                Op::LeakyRelu(a, slope) => {
                    let mask = self.value(a).mapv(|x| if x > 0.0 { 1.0 } else { slope });
                    let m = self.leaf(mask);
                    contrib[0] = Some((a, self.mul(g, m)));
                }
                Op::Log(a) => {
                    let r = self.recip_safe(a);
                    contrib[0] = Some((a, self.mul(g, r)));
                }
                Op::ClampMin(a, floor) => {
                    let mask = self.value(a).mapv(|x| if x >= floor { 1.0 } else { 0.0 });
                    let m = self.leaf(mask);
                    contrib[0] = Some((a, self.mul(g, m)));
                }
                Op::Sqrt(a) => {
                    let r = self.recip_safe(Var(i));
                    let r = self.scale(r, 0.5);
                    contrib[0] = Some((a, self.mul(g, r)));
                }
                Op::RecipSafe(a) => {
                    let y = Var(i);
                    let y2 = self.square(y);
                    let d = self.scale(y2, -1.0);
                    contrib[0] = Some((a, self.mul(g, d)));
                }
                Op::SumAll(a) => {
                    let (r, c) = self.shape(a);
                    contrib[0] = Some((a, self.broadcast_scalar(g, r, c)));
                }
                Op::BroadcastScalar(a) => contrib[0] = Some((a, self.sum_all(g))),
                Op::SumRows(a) => {
                    let r = self.shape(a).0;
                    contrib[0] = Some((a, self.broadcast_rows(g, r)));
                }
                Op::BroadcastRows(a) => contrib[0] = Some((a, self.sum_rows(g))),
                Op::SumCols(a) => {
                    let c = self.shape(a).1;
                    contrib[0] = Some((a, self.broadcast_cols(g, c)));
                }
                Op::BroadcastCols(a) => contrib[0] = Some((a, self.sum_cols(g))),
                Op::Reshape(a) => {
                    let (r, c) = self.shape(a);
                    contrib[0] = Some((a, self.reshape(g, r, c)));
                }
                Op::Gather(a, map) => {
                    let (r, c) = self.shape(a);
                    contrib[0] = Some((a, self.scatter_add(g, map, r, c)));
                }
                Op::ScatterAdd(a, map) => {
                    let (r, c) = self.shape(a);
                    contrib[0] = Some((a, self.gather(g, map, r, c)));
                }
                Op::ConcatCols(a, b) => {
                    let ca = self.shape(a).1;
                    let cb = self.shape(b).1;
                    if need(a) {
                        contrib[0] = Some((a, self.slice_cols(g, 0, ca)));
                    }
                    if need(b) {
                        contrib[1] = Some((b, self.slice_cols(g, ca, ca + cb)));
                    }
                }
            }
            for (p, c) in contrib.into_iter().flatten() {
                if !need(p) {
                    continue;
                }
                grads[p.0] = Some(match grads[p.0] {
                    Some(prev) => self.add(prev, c),
                    None => c,
                });
            }
        }

        wrt.iter()
            .map(|&w| match grads.get(w.0).copied().flatten() {
                Some(g) => g,
                None => {
                    let (r, c) = self.shape(w);
                    self.zeros(r, c)
                }
            })
            .collect()
    }
}

/// Sum of squared entries per row: `r x c -> r x 1`.
pub fn row_sq_norm(g: &mut Graph, a: Var) -> Var {
    let sq = g.square(a);
    g.sum_cols(sq)
}

/// Elementwise product of each row of `x` with the matching entry of `col`.
pub fn scale_rows(g: &mut Graph, col: Var, x: Var) -> Var {
    let c = g.shape(x).1;
    let b = g.broadcast_cols(col, c);
    g.mul(b, x)
}
