//! Dense 2-D tensors and a tape that records operations for reverse-mode
//! differentiation.
//!
//! Every value is a row-major `f64` matrix; vectors are `[1, n]` and
//! scalars `[1, 1]`. Operations are appended to a [`Graph`] and return a
//! [`Var`] handle. [`Graph::backward`] walks the tape once in reverse.
//!
//! Shape mismatches are programming errors and panic with both shapes.

mod adam;
mod attention;
mod checkpoint;
mod gradcheck;

use std::collections::{BTreeMap, HashMap};
use std::fmt;

use rand::Rng;

use crate::error::{Error, Result};

pub use adam::{adam_step, Adam, AdamConfig};
pub use attention::{band_mask, multi_head_attention, sliding_window_mha, MhaParams};
pub use checkpoint::{read_tensors, tensors_from_bytes, tensors_to_bytes, write_tensors, TENSOR_MAGIC};
pub use gradcheck::{check_gradients, relative_error, GradCheck};

#[derive(Clone, PartialEq)]
pub struct Tensor {
    pub rows: usize,
    pub cols: usize,
    pub data: Vec<f64>,
}

impl fmt::Debug for Tensor {
    fn fmt(&self, f: &mut fmt::Formatter<'_>) -> fmt::Result {
        write!(f, "Tensor[{}, {}]{:?}", self.rows, self.cols, self.data)
    }
}

impl Tensor {
    pub fn zeros(rows: usize, cols: usize) -> Self {
        Self { rows, cols, data: vec![0.0; rows * cols] }
    }

    pub fn filled(rows: usize, cols: usize, value: f64) -> Self {
        Self { rows, cols, data: vec![value; rows * cols] }
    }

    pub fn from_vec(rows: usize, cols: usize, data: Vec<f64>) -> Self {
        assert_eq!(data.len(), rows * cols, "data length {} does not match shape [{rows}, {cols}]", data.len());
        Self { rows, cols, data }
    }

    pub fn from_rows(rows: &[Vec<f64>]) -> Self {
        let cols = rows.first().map_or(0, Vec::len);
        assert!(rows.iter().all(|r| r.len() == cols), "ragged rows");
        Self::from_vec(rows.len(), cols, rows.concat())
    }

    pub fn scalar(x: f64) -> Self {
        Self::from_vec(1, 1, vec![x])
    }

    pub fn shape(&self) -> [usize; 2] {
        [self.rows, self.cols]
    }

    pub fn len(&self) -> usize {
        self.data.len()
    }

    pub fn is_empty(&self) -> bool {
        self.data.is_empty()
    }

    pub fn at(&self, r: usize, c: usize) -> f64 {
        self.data[r * self.cols + c]
    }

    pub fn row(&self, r: usize) -> &[f64] {
        &self.data[r * self.cols..(r + 1) * self.cols]
    }

    /// The single value of a `[1, 1]` tensor.
    pub fn item(&self) -> f64 {
        assert_eq!(self.shape(), [1, 1], "item() on a non-scalar tensor");
        self.data[0]
    }

    pub fn is_finite(&self) -> bool {
        self.data.iter().all(|x| x.is_finite())
    }

    pub fn sq_norm(&self) -> f64 {
        self.data.iter().map(|x| x * x).sum()
    }

    /// Uniform initialization in `[-limit, limit]`.
    pub fn uniform(rows: usize, cols: usize, limit: f64, rng: &mut impl Rng) -> Self {
        let data = (0..rows * cols).map(|_| rng.gen_range(-limit..=limit)).collect();
        Self::from_vec(rows, cols, data)
    }

    /// Xavier/Glorot uniform initialization with fan-in `cols` and fan-out
    /// `rows`.
    pub fn xavier(rows: usize, cols: usize, rng: &mut impl Rng) -> Self {
        let limit = (6.0 / (rows + cols) as f64).sqrt();
        Self::uniform(rows, cols, limit, rng)
    }

    fn add_assign(&mut self, other: &Tensor) {
        debug_assert_eq!(self.shape(), other.shape());
        for (a, b) in self.data.iter_mut().zip(&other.data) {
            *a += b;
        }
    }

    fn transpose(&self) -> Tensor {
        let mut out = Tensor::zeros(self.cols, self.rows);
        for r in 0..self.rows {
            for c in 0..self.cols {
                out.data[c * self.rows + r] = self.data[r * self.cols + c];
            }
        }
        out
    }
}

/// `a · b`.
fn mm(a: &Tensor, b: &Tensor) -> Tensor {
    assert_eq!(a.cols, b.rows, "matmul shape mismatch: {:?} x {:?}", a.shape(), b.shape());
    let mut out = Tensor::zeros(a.rows, b.cols);
    for i in 0..a.rows {
        let orow = &mut out.data[i * b.cols..(i + 1) * b.cols];
        for k in 0..a.cols {
            let x = a.data[i * a.cols + k];
            if x == 0.0 {
                continue;
            }
            let brow = &b.data[k * b.cols..(k + 1) * b.cols];
            for (o, y) in orow.iter_mut().zip(brow) {
                *o += x * y;
            }
        }
    }
    out
}

/// `a · bᵀ`.
fn mm_t(a: &Tensor, b: &Tensor) -> Tensor {
    assert_eq!(a.cols, b.cols, "matmul_t shape mismatch: {:?} x {:?}ᵀ", a.shape(), b.shape());
    let mut out = Tensor::zeros(a.rows, b.rows);
    for i in 0..a.rows {
        let arow = a.row(i);
        for j in 0..b.rows {
            out.data[i * b.rows + j] = arow.iter().zip(b.row(j)).map(|(x, y)| x * y).sum();
        }
    }
    out
}

/// `aᵀ · b`.
fn t_mm(a: &Tensor, b: &Tensor) -> Tensor {
    assert_eq!(a.rows, b.rows, "t_matmul shape mismatch: {:?}ᵀ x {:?}", a.shape(), b.shape());
    let mut out = Tensor::zeros(a.cols, b.cols);
    for k in 0..a.rows {
        let brow = b.row(k);
        for i in 0..a.cols {
            let x = a.data[k * a.cols + i];
            if x == 0.0 {
                continue;
            }
            let orow = &mut out.data[i * b.cols..(i + 1) * b.cols];
            for (o, y) in orow.iter_mut().zip(brow) {
                *o += x * y;
            }
        }
    }
    out
}

const GELU_C: f64 = 0.797_884_560_802_865_4; // sqrt(2/pi)

fn gelu(x: f64) -> f64 {
    0.5 * x * (1.0 + (GELU_C * (x + 0.044715 * x * x * x)).tanh())
}

fn gelu_grad(x: f64) -> f64 {
    let t = (GELU_C * (x + 0.044715 * x * x * x)).tanh();
    0.5 * (1.0 + t) + 0.5 * x * (1.0 - t * t) * GELU_C * (1.0 + 3.0 * 0.044715 * x * x)
}

fn sigmoid(x: f64) -> f64 {
    if x >= 0.0 {
        1.0 / (1.0 + (-x).exp())
    } else {
        let e = x.exp();
        e / (1.0 + e)
    }
}

/// Row-wise softmax; entries where `mask` is false get probability 0.
pub fn softmax_rows(x: &Tensor, mask: Option<&[bool]>) -> Tensor {
    let mut out = Tensor::zeros(x.rows, x.cols);
    for r in 0..x.rows {
        let allowed = |c: usize| mask.is_none_or(|m| m[r * x.cols + c]);
        let max = (0..x.cols).filter(|&c| allowed(c)).map(|c| x.at(r, c)).fold(f64::NEG_INFINITY, f64::max);
        if max == f64::NEG_INFINITY {
            continue;
        }
        let mut sum = 0.0;
        for c in 0..x.cols {
            if allowed(c) {
                let e = (x.at(r, c) - max).exp();
                out.data[r * x.cols + c] = e;
                sum += e;
            }
        }
        for v in &mut out.data[r * x.cols..(r + 1) * x.cols] {
            *v /= sum;
        }
    }
    out
}

#[derive(Clone, Copy, Debug, PartialEq, Eq, Hash)]
pub struct Var(usize);

enum Op {
    Leaf,
    MatMul(Var, Var),
    MatMulT(Var, Var),
    Transpose(Var),
    Add(Var, Var),
    AddRow(Var, Var),
    Mul(Var, Var),
    Scale(Var, f64),
    ConcatCols(Vec<Var>),
    ConcatRows(Vec<Var>),
    SliceCols(Var, usize),
    SliceRows(Var, usize),
    GatherRows(Var, Vec<usize>),
    MeanRows(Var),
    SumAll(Var),
    Tanh(Var),
    Sigmoid(Var),
    Relu(Var),
    Gelu(Var),
    Softmax(Var),
    LayerNorm { x: Var, gain: Var, bias: Var, xhat: Tensor, inv_std: Vec<f64> },
    Dropout(Var, Vec<f64>),
    CrossEntropy { logits: Var, probs: Tensor, targets: Vec<Option<usize>>, count: usize },
}

struct Node {
    value: Tensor,
    op: Op,
    needs_grad: bool,
}

/// The operation tape of one forward pass.
pub struct Graph {
    nodes: Vec<Node>,
    params: HashMap<String, Var>,
    param_names: Vec<(String, Var)>,
    train: bool,
}

/// Gradients produced by [`Graph::backward`].
pub struct Gradients {
    grads: Vec<Option<Tensor>>,
    params: Vec<(String, Var)>,
}

impl Gradients {
    /// Gradient of a node; zero-shaped `None` when the loss does not
    /// depend on it.
    pub fn get(&self, v: Var) -> Option<&Tensor> {
        self.grads.get(v.0).and_then(Option::as_ref)
    }

    /// Gradients of every named parameter. Parameters the loss does not
    /// reach get a zero gradient of the right shape.
    pub fn params(&self, g: &Graph) -> BTreeMap<String, Tensor> {
        self.params
            .iter()
            .map(|(name, v)| {
                let grad = self.get(*v).cloned().unwrap_or_else(|| {
                    let t = g.value(*v);
                    Tensor::zeros(t.rows, t.cols)
                });
                (name.clone(), grad)
            })
            .collect()
    }
}

impl Default for Graph {
    fn default() -> Self {
        Self::new(false)
    }
}

impl Graph {
    /// `train` enables dropout.
    pub fn new(train: bool) -> Self {
        Self { nodes: Vec::new(), params: HashMap::new(), param_names: Vec::new(), train }
    }

    pub fn is_train(&self) -> bool {
        self.train
    }

    pub fn len(&self) -> usize {
        self.nodes.len()
    }

    pub fn is_empty(&self) -> bool {
        self.nodes.is_empty()
    }

    pub fn value(&self, v: Var) -> &Tensor {
        &self.nodes[v.0].value
    }

    fn shape(&self, v: Var) -> [usize; 2] {
        self.nodes[v.0].value.shape()
    }

    fn push(&mut self, value: Tensor, op: Op, inputs: &[Var]) -> Var {
        let needs_grad = inputs.iter().any(|v| self.nodes[v.0].needs_grad);
        self.nodes.push(Node { value, op, needs_grad });
        Var(self.nodes.len() - 1)
    }

    /// A constant input.
    pub fn input(&mut self, value: Tensor) -> Var {
        self.nodes.push(Node { value, op: Op::Leaf, needs_grad: false });
        Var(self.nodes.len() - 1)
    }

    /// A differentiable leaf. Each name is registered once per graph;
    /// later calls return the same handle.
    pub fn param(&mut self, name: &str, value: &Tensor) -> Var {
        if let Some(&v) = self.params.get(name) {
            return v;
        }
        self.nodes.push(Node { value: value.clone(), op: Op::Leaf, needs_grad: true });
        let v = Var(self.nodes.len() - 1);
        self.params.insert(name.to_string(), v);
        self.param_names.push((name.to_string(), v));
        v
    }

    pub fn param_var(&self, name: &str) -> Option<Var> {
        self.params.get(name).copied()
    }

    pub fn matmul(&mut self, a: Var, b: Var) -> Var {
        let out = mm(self.value(a), self.value(b));
        self.push(out, Op::MatMul(a, b), &[a, b])
    }

    /// `a · bᵀ`.
    pub fn matmul_t(&mut self, a: Var, b: Var) -> Var {
        let out = mm_t(self.value(a), self.value(b));
        self.push(out, Op::MatMulT(a, b), &[a, b])
    }

    pub fn transpose(&mut self, a: Var) -> Var {
        let out = self.value(a).transpose();
        self.push(out, Op::Transpose(a), &[a])
    }

    pub fn add(&mut self, a: Var, b: Var) -> Var {
        assert_eq!(self.shape(a), self.shape(b), "add shape mismatch: {:?} + {:?}", self.shape(a), self.shape(b));
        let mut out = self.value(a).clone();
        out.add_assign(self.value(b));
        self.push(out, Op::Add(a, b), &[a, b])
    }

    /// Adds the `[1, c]` row `b` to every row of `a`.
    pub fn add_row(&mut self, a: Var, b: Var) -> Var {
        let (ta, tb) = (self.value(a), self.value(b));
        assert!(tb.rows == 1 && tb.cols == ta.cols, "add_row shape mismatch: {:?} + {:?}", ta.shape(), tb.shape());
        let mut out = ta.clone();
        for r in 0..out.rows {
            for (o, x) in out.data[r * out.cols..(r + 1) * out.cols].iter_mut().zip(&tb.data) {
                *o += x;
            }
        }
        self.push(out, Op::AddRow(a, b), &[a, b])
    }

    /// Element-wise product.
    pub fn mul(&mut self, a: Var, b: Var) -> Var {
        assert_eq!(self.shape(a), self.shape(b), "mul shape mismatch: {:?} * {:?}", self.shape(a), self.shape(b));
        let data = self.value(a).data.iter().zip(&self.value(b).data).map(|(x, y)| x * y).collect();
        let [r, c] = self.shape(a);
        self.push(Tensor::from_vec(r, c, data), Op::Mul(a, b), &[a, b])
    }

    pub fn scale(&mut self, a: Var, s: f64) -> Var {
        let t = self.value(a);
        let out = Tensor::from_vec(t.rows, t.cols, t.data.iter().map(|x| x * s).collect());
        self.push(out, Op::Scale(a, s), &[a])
    }

    pub fn concat_cols(&mut self, parts: &[Var]) -> Var {
        assert!(!parts.is_empty(), "concat_cols of nothing");
        let rows = self.shape(parts[0])[0];
        for p in parts {
            assert_eq!(
                self.shape(*p)[0],
                rows,
                "concat_cols row mismatch: {:?} vs {:?}",
                self.shape(parts[0]),
                self.shape(*p)
            );
        }
        let cols: usize = parts.iter().map(|p| self.shape(*p)[1]).sum();
        let mut out = Tensor::zeros(rows, cols);
        for r in 0..rows {
            let mut off = 0;
            for p in parts {
                let t = self.value(*p);
                out.data[r * cols + off..r * cols + off + t.cols].copy_from_slice(t.row(r));
                off += t.cols;
            }
        }
        self.push(out, Op::ConcatCols(parts.to_vec()), parts)
    }

    pub fn concat_rows(&mut self, parts: &[Var]) -> Var {
        assert!(!parts.is_empty(), "concat_rows of nothing");
        let cols = self.shape(parts[0])[1];
        let mut data = Vec::new();
        for p in parts {
            assert_eq!(
                self.shape(*p)[1],
                cols,
                "concat_rows col mismatch: {:?} vs {:?}",
                self.shape(parts[0]),
                self.shape(*p)
            );
            data.extend_from_slice(&self.value(*p).data);
        }
        let rows = data.len() / cols.max(1);
        self.push(Tensor::from_vec(rows, cols, data), Op::ConcatRows(parts.to_vec()), parts)
    }

    /// Columns `start..end`.
    pub fn slice_cols(&mut self, a: Var, start: usize, end: usize) -> Var {
        let t = self.value(a);
        assert!(start <= end && end <= t.cols, "slice_cols {start}..{end} out of range for {:?}", t.shape());
        let mut out = Tensor::zeros(t.rows, end - start);
        for r in 0..t.rows {
            out.data[r * (end - start)..(r + 1) * (end - start)].copy_from_slice(&t.row(r)[start..end]);
        }
        self.push(out, Op::SliceCols(a, start), &[a])
    }

    /// Rows `start..end`.
    pub fn slice_rows(&mut self, a: Var, start: usize, end: usize) -> Var {
        let t = self.value(a);
        assert!(start <= end && end <= t.rows, "slice_rows {start}..{end} out of range for {:?}", t.shape());
        let out = Tensor::from_vec(end - start, t.cols, t.data[start * t.cols..end * t.cols].to_vec());
        self.push(out, Op::SliceRows(a, start), &[a])
    }

    /// Rows of `a` at `idx`, in order. Also serves as embedding lookup.
    pub fn gather_rows(&mut self, a: Var, idx: &[usize]) -> Var {
        let t = self.value(a);
        let mut data = Vec::with_capacity(idx.len() * t.cols);
        for &i in idx {
            assert!(i < t.rows, "gather_rows index {i} out of range for {:?}", t.shape());
            data.extend_from_slice(t.row(i));
        }
        let out = Tensor::from_vec(idx.len(), t.cols, data);
        self.push(out, Op::GatherRows(a, idx.to_vec()), &[a])
    }

    /// Column means, `[n, c] -> [1, c]`.
    pub fn mean_rows(&mut self, a: Var) -> Var {
        let t = self.value(a);
        assert!(t.rows > 0, "mean_rows of an empty tensor {:?}", t.shape());
        let mut out = Tensor::zeros(1, t.cols);
        for r in 0..t.rows {
            for (o, x) in out.data.iter_mut().zip(t.row(r)) {
                *o += x;
            }
        }
        let n = t.rows as f64;
        out.data.iter_mut().for_each(|o| *o /= n);
        self.push(out, Op::MeanRows(a), &[a])
    }

    pub fn sum_all(&mut self, a: Var) -> Var {
        let s = self.value(a).data.iter().sum();
        self.push(Tensor::scalar(s), Op::SumAll(a), &[a])
    }

    fn map(&mut self, a: Var, f: impl Fn(f64) -> f64, op: Op) -> Var {
        let t = self.value(a);
        let out = Tensor::from_vec(t.rows, t.cols, t.data.iter().map(|&x| f(x)).collect());
        self.push(out, op, &[a])
    }

    pub fn tanh(&mut self, a: Var) -> Var {
        self.map(a, f64::tanh, Op::Tanh(a))
    }

    pub fn sigmoid(&mut self, a: Var) -> Var {
        self.map(a, sigmoid, Op::Sigmoid(a))
    }

    pub fn relu(&mut self, a: Var) -> Var {
        self.map(a, |x| x.max(0.0), Op::Relu(a))
    }

    /// GELU, tanh approximation.
    pub fn gelu(&mut self, a: Var) -> Var {
        self.map(a, gelu, Op::Gelu(a))
    }

    /// Row-wise softmax over the last axis.
    pub fn softmax(&mut self, a: Var) -> Var {
        self.masked_softmax(a, None)
    }

    /// Row-wise softmax restricted to entries where `mask` is true; masked
    /// entries are treated as −∞ logits and get probability and gradient 0.
    pub fn masked_softmax(&mut self, a: Var, mask: Option<&[bool]>) -> Var {
        let t = self.value(a);
        if let Some(m) = mask {
            assert_eq!(m.len(), t.len(), "mask length {} does not match {:?}", m.len(), t.shape());
        }
        let out = softmax_rows(t, mask);
        debug_assert!(!t.is_finite() || out.is_finite(), "softmax produced non-finite output");
        // masked entries hold exactly 0, so the backward rule y·(dy − ⟨y,dy⟩)
        // gives them exactly 0 gradient without keeping the mask
        self.push(out, Op::Softmax(a), &[a])
    }

    /// Per-row layer normalization with `[1, c]` gain and bias.
    pub fn layer_norm(&mut self, x: Var, gain: Var, bias: Var, eps: f64) -> Var {
        let t = self.value(x);
        let (g, b) = (self.value(gain), self.value(bias));
        assert!(
            g.shape() == [1, t.cols] && b.shape() == [1, t.cols],
            "layer_norm shape mismatch: x {:?}, gain {:?}, bias {:?}",
            t.shape(),
            g.shape(),
            b.shape()
        );
        let n = t.cols as f64;
        let mut xhat = Tensor::zeros(t.rows, t.cols);
        let mut inv_std = Vec::with_capacity(t.rows);
        let mut out = Tensor::zeros(t.rows, t.cols);
        for r in 0..t.rows {
            let row = t.row(r);
            let mean = row.iter().sum::<f64>() / n;
            let var = row.iter().map(|v| (v - mean) * (v - mean)).sum::<f64>() / n;
            let is = 1.0 / (var + eps).sqrt();
            inv_std.push(is);
            for c in 0..t.cols {
                let h = (row[c] - mean) * is;
                xhat.data[r * t.cols + c] = h;
                out.data[r * t.cols + c] = h * g.data[c] + b.data[c];
            }
        }
        debug_assert!(!t.is_finite() || out.is_finite(), "layer_norm produced non-finite output");
        self.push(out, Op::LayerNorm { x, gain, bias, xhat, inv_std }, &[x, gain, bias])
    }

    /// Inverted dropout; identity when `p == 0` or the graph is not in
    /// training mode.
    pub fn dropout(&mut self, a: Var, p: f64, rng: &mut impl Rng) -> Var {
        if !self.train || p <= 0.0 {
            return a;
        }
        assert!(p < 1.0, "dropout probability {p} must be below 1");
        let t = self.value(a);
        let keep = 1.0 / (1.0 - p);
        let mask: Vec<f64> = (0..t.len()).map(|_| if rng.gen::<f64>() < p { 0.0 } else { keep }).collect();
        let out = Tensor::from_vec(t.rows, t.cols, t.data.iter().zip(&mask).map(|(x, m)| x * m).collect());
        self.push(out, Op::Dropout(a, mask), &[a])
    }

    /// Mean cross-entropy of row-wise softmax(logits) against the targets
    /// that are present. Rows with `None` are excluded from the mean; with
    /// no targets at all the loss is 0.
    pub fn cross_entropy(&mut self, logits: Var, targets: &[Option<usize>]) -> Var {
        let t = self.value(logits);
        assert_eq!(targets.len(), t.rows, "cross_entropy: {} targets for logits {:?}", targets.len(), t.shape());
        let probs = softmax_rows(t, None);
        let mut loss = 0.0;
        let mut count = 0;
        for (r, tgt) in targets.iter().enumerate() {
            if let Some(k) = *tgt {
                assert!(k < t.cols, "cross_entropy target {k} out of range for {:?}", t.shape());
                // log-sum-exp form for accuracy
                let row = t.row(r);
                let max = row.iter().copied().fold(f64::NEG_INFINITY, f64::max);
                let lse = max + row.iter().map(|x| (x - max).exp()).sum::<f64>().ln();
                loss += lse - row[k];
                count += 1;
            }
        }
        let value = if count == 0 { 0.0 } else { loss / count as f64 };
        self.push(
            Tensor::scalar(value),
            Op::CrossEntropy { logits, probs, targets: targets.to_vec(), count },
            &[logits],
        )
    }

    /// Reverse-mode pass from a scalar loss.
    pub fn backward(&self, loss: Var) -> Result<Gradients> {
        let shape = self.shape(loss);
        if shape != [1, 1] {
            return Err(Error::Invalid(format!("backward needs a scalar loss, got shape {shape:?}")));
        }
        let mut grads: Vec<Option<Tensor>> = vec![None; self.nodes.len()];
        grads[loss.0] = Some(Tensor::scalar(1.0));
        for i in (0..=loss.0).rev() {
            let node = &self.nodes[i];
            if !node.needs_grad {
                continue;
            }
            let Some(dy) = grads[i].take() else { continue };
            self.backprop_node(node, &dy, &mut grads);
            grads[i] = Some(dy);
        }
        Ok(Gradients { grads, params: self.param_names.clone() })
    }

    fn backprop_node(&self, node: &Node, dy: &Tensor, grads: &mut [Option<Tensor>]) {
        let mut acc = |v: Var, g: Tensor| {
            if !self.nodes[v.0].needs_grad {
                return;
            }
            match &mut grads[v.0] {
                Some(existing) => existing.add_assign(&g),
                slot => *slot = Some(g),
            }
        };
        let y = &node.value;
        match &node.op {
            Op::Leaf => {}
            Op::MatMul(a, b) => {
                acc(*a, mm_t(dy, self.value(*b)));
                acc(*b, t_mm(self.value(*a), dy));
            }
            Op::MatMulT(a, b) => {
                acc(*a, mm(dy, self.value(*b)));
                acc(*b, t_mm(dy, self.value(*a)));
            }
            Op::Transpose(a) => acc(*a, dy.transpose()),
            Op::Add(a, b) => {
                acc(*a, dy.clone());
                acc(*b, dy.clone());
            }
            Op::AddRow(a, b) => {
                acc(*a, dy.clone());
                let mut db = Tensor::zeros(1, dy.cols);
                for r in 0..dy.rows {
                    for (o, x) in db.data.iter_mut().zip(dy.row(r)) {
                        *o += x;
                    }
                }
                acc(*b, db);
            }
            Op::Mul(a, b) => {
                let (ta, tb) = (self.value(*a), self.value(*b));
                let da = dy.data.iter().zip(&tb.data).map(|(g, x)| g * x).collect();
                let db = dy.data.iter().zip(&ta.data).map(|(g, x)| g * x).collect();
                acc(*a, Tensor::from_vec(dy.rows, dy.cols, da));
                acc(*b, Tensor::from_vec(dy.rows, dy.cols, db));
            }
            Op::Scale(a, s) => acc(*a, Tensor::from_vec(dy.rows, dy.cols, dy.data.iter().map(|g| g * s).collect())),
            Op::ConcatCols(parts) => {
                let mut off = 0;
                for p in parts {
                    let w = self.shape(*p)[1];
                    let mut g = Tensor::zeros(dy.rows, w);
                    for r in 0..dy.rows {
                        g.data[r * w..(r + 1) * w].copy_from_slice(&dy.row(r)[off..off + w]);
                    }
                    acc(*p, g);
                    off += w;
                }
            }
            Op::ConcatRows(parts) => {
                let mut off = 0;
                for p in parts {
                    let h = self.shape(*p)[0];
                    acc(*p, Tensor::from_vec(h, dy.cols, dy.data[off * dy.cols..(off + h) * dy.cols].to_vec()));
                    off += h;
                }
            }
            Op::SliceCols(a, start) => {
                let [rows, cols] = self.shape(*a);
                let mut g = Tensor::zeros(rows, cols);
                for r in 0..rows {
                    g.data[r * cols + start..r * cols + start + dy.cols].copy_from_slice(dy.row(r));
                }
                acc(*a, g);
            }
            Op::SliceRows(a, start) => {
                let [rows, cols] = self.shape(*a);
                let mut g = Tensor::zeros(rows, cols);
                g.data[start * cols..start * cols + dy.len()].copy_from_slice(&dy.data);
                acc(*a, g);
            }
            Op::GatherRows(a, idx) => {
                let [rows, cols] = self.shape(*a);
                let mut g = Tensor::zeros(rows, cols);
                for (r, &i) in idx.iter().enumerate() {
                    for (o, x) in g.data[i * cols..(i + 1) * cols].iter_mut().zip(dy.row(r)) {
                        *o += x;
                    }
                }
                acc(*a, g);
            }
            Op::MeanRows(a) => {
                let [rows, cols] = self.shape(*a);
                let n = rows as f64;
                let mut g = Tensor::zeros(rows, cols);
                for r in 0..rows {
                    for (o, x) in g.data[r * cols..(r + 1) * cols].iter_mut().zip(&dy.data) {
                        *o = x / n;
                    }
                }
                acc(*a, g);
            }
            Op::SumAll(a) => {
                let [rows, cols] = self.shape(*a);
                acc(*a, Tensor::filled(rows, cols, dy.item()));
            }
            Op::Tanh(a) => acc(*a, elementwise(dy, y, |g, y| g * (1.0 - y * y))),
            Op::Sigmoid(a) => acc(*a, elementwise(dy, y, |g, y| g * y * (1.0 - y))),
            Op::Relu(a) => acc(*a, elementwise(dy, self.value(*a), |g, x| if x > 0.0 { g } else { 0.0 })),
            Op::Gelu(a) => acc(*a, elementwise(dy, self.value(*a), |g, x| g * gelu_grad(x))),
            Op::Softmax(a) => {
                let mut g = Tensor::zeros(y.rows, y.cols);
                for r in 0..y.rows {
                    let (yr, dr) = (y.row(r), dy.row(r));
                    let dot: f64 = yr.iter().zip(dr).map(|(p, d)| p * d).sum();
                    for c in 0..y.cols {
                        g.data[r * y.cols + c] = yr[c] * (dr[c] - dot);
                    }
                }
                acc(*a, g);
            }
            Op::LayerNorm { x, gain, bias, xhat, inv_std } => {
                let gv = self.value(*gain);
                let (rows, cols) = (xhat.rows, xhat.cols);
                let n = cols as f64;
                let mut dx = Tensor::zeros(rows, cols);
                let mut dg = Tensor::zeros(1, cols);
                let mut db = Tensor::zeros(1, cols);
                for r in 0..rows {
                    let (hr, dr) = (xhat.row(r), dy.row(r));
                    let mut sum_dh = 0.0;
                    let mut sum_dh_h = 0.0;
                    for c in 0..cols {
                        let dh = dr[c] * gv.data[c];
                        sum_dh += dh;
                        sum_dh_h += dh * hr[c];
                        dg.data[c] += dr[c] * hr[c];
                        db.data[c] += dr[c];
                    }
                    for c in 0..cols {
                        let dh = dr[c] * gv.data[c];
                        dx.data[r * cols + c] = inv_std[r] / n * (n * dh - sum_dh - hr[c] * sum_dh_h);
                    }
                }
                acc(*x, dx);
                acc(*gain, dg);
                acc(*bias, db);
            }
            Op::Dropout(a, mask) => {
                acc(*a, Tensor::from_vec(dy.rows, dy.cols, dy.data.iter().zip(mask).map(|(g, m)| g * m).collect()))
            }
            Op::CrossEntropy { logits, probs, targets, count } => {
                let mut g = Tensor::zeros(probs.rows, probs.cols);
                if *count > 0 {
                    let s = dy.item() / *count as f64;
                    for (r, tgt) in targets.iter().enumerate() {
                        if let Some(k) = *tgt {
                            for c in 0..probs.cols {
                                let onehot = if c == k { 1.0 } else { 0.0 };
                                g.data[r * probs.cols + c] = s * (probs.at(r, c) - onehot);
                            }
                        }
                    }
                }
                acc(*logits, g);
            }
        }
    }
}

fn elementwise(dy: &Tensor, other: &Tensor, f: impl Fn(f64, f64) -> f64) -> Tensor {
    Tensor::from_vec(dy.rows, dy.cols, dy.data.iter().zip(&other.data).map(|(&g, &o)| f(g, o)).collect())
}
