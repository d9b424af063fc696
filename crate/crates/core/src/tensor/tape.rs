//! Reverse-mode automatic differentiation.
//!
//! A [`Tape`] records every op as a node holding its forward value. Nodes are
//! appended in evaluation order, so walking them backwards is a valid
//! topological order for [`Tape::backward`]. A tape can be differentiated
//! once; build a new tape for every forward pass.

use std::cell::{Ref, RefCell};
use std::collections::HashMap;

use super::params::{ParamId, ParamStore};
use super::{matmul_nt_raw, matmul_raw, matmul_tn_raw, Tensor};
use crate::{Error, Result};

/// Handle to a node on a [`Tape`].
#[derive(Clone, Copy, Debug, PartialEq, Eq, Hash, PartialOrd, Ord)]
pub struct Var(usize);

impl Var {
    pub fn index(&self) -> usize {
        self.0
    }
}

const LN_EPS: f64 = 1e-5;

enum Op {
    Leaf,
    MatMul(Var, Var),
    MatMulNt(Var, Var),
    Add(Var, Var),
    Sub(Var, Var),
    Mul(Var, Var),
    AddRow(Var, Var),
    Scale(Var, f64),
    ConcatCols(Vec<Var>),
    ConcatRows(Vec<Var>),
    SliceCols(Var, usize),
    GatherRows(Var, Vec<usize>),
    MaxOf(Vec<Var>, Vec<u32>),
    SegmentMax(Var, Vec<usize>),
    Softmax(Var),
    LogSoftmax(Var),
    LayerNorm {
        x: Var,
        gain: Var,
        bias: Var,
        xhat: Vec<f64>,
        inv_std: Vec<f64>,
    },
    Relu(Var),
    Sigmoid(Var),
    Exp(Var),
    Clamp(Var, f64, f64),
    Sum(Var),
    Mean(Var),
    Mse {
        pred: Var,
        target: Vec<f64>,
        weight: Vec<f64>,
        count: f64,
    },
    CrossEntropy {
        logits: Var,
        targets: Vec<Option<usize>>,
    },
    GaussianKl {
        mu: Var,
        logvar: Var,
    },
    Reparam {
        mu: Var,
        logvar: Var,
        eps: Vec<f64>,
    },
}

impl Op {
    fn inputs(&self) -> Vec<Var> {
        match self {
            Op::Leaf => vec![],
            Op::MatMul(a, b)
            | Op::MatMulNt(a, b)
            | Op::Add(a, b)
            | Op::Sub(a, b)
            | Op::Mul(a, b)
            | Op::AddRow(a, b) => vec![*a, *b],
            Op::ConcatCols(v) | Op::ConcatRows(v) | Op::MaxOf(v, _) => v.clone(),
            Op::Scale(a, _)
            | Op::SliceCols(a, _)
            | Op::GatherRows(a, _)
            | Op::SegmentMax(a, _)
            | Op::Softmax(a)
            | Op::LogSoftmax(a)
            | Op::Relu(a)
            | Op::Sigmoid(a)
            | Op::Exp(a)
            | Op::Clamp(a, _, _)
            | Op::Sum(a)
            | Op::Mean(a) => vec![*a],
            Op::LayerNorm { x, gain, bias, .. } => vec![*x, *gain, *bias],
            Op::Mse { pred, .. } => vec![*pred],
            Op::CrossEntropy { logits, .. } => vec![*logits],
            Op::GaussianKl { mu, logvar } | Op::Reparam { mu, logvar, .. } => vec![*mu, *logvar],
        }
    }
}

struct Node {
    value: Tensor,
    op: Op,
    requires_grad: bool,
}

#[derive(Default)]
struct Inner {
    nodes: Vec<Node>,
    params: HashMap<usize, Var>,
    consumed: bool,
}

/// Records a forward computation for one backward pass.
pub struct Tape {
    inner: RefCell<Inner>,
    grad_enabled: bool,
}

impl Default for Tape {
    fn default() -> Self {
        Tape::new()
    }
}

/// Gradients produced by [`Tape::backward`].
pub struct Gradients {
    grads: Vec<Option<Tensor>>,
    params: Vec<(usize, Var)>,
}

impl Gradients {
    pub fn get(&self, v: Var) -> Option<&Tensor> {
        self.grads.get(v.0).and_then(|g| g.as_ref())
    }

    pub fn param(&self, id: ParamId) -> Option<&Tensor> {
        self.params
            .iter()
            .find(|(p, _)| *p == id.index())
            .and_then(|(_, v)| self.get(*v))
    }

    /// Gradients aligned with the parameter store; `None` for unused params.
    pub fn into_param_grads(mut self, n_params: usize) -> Vec<Option<Tensor>> {
        let mut out = vec![None; n_params];
        for (p, v) in &self.params {
            if *p < n_params {
                out[*p] = self.grads[v.0].take();
            }
        }
        out
    }
}

fn row_softmax(x: &[f64], out: &mut [f64]) {
    let m = x.iter().cloned().fold(f64::NEG_INFINITY, f64::max);
    let mut s = 0.0;
    for (o, &v) in out.iter_mut().zip(x) {
        *o = (v - m).exp();
        s += *o;
    }
    for o in out.iter_mut() {
        *o /= s;
    }
}

fn row_log_softmax(x: &[f64], out: &mut [f64]) {
    let m = x.iter().cloned().fold(f64::NEG_INFINITY, f64::max);
    let lse = m + x.iter().map(|v| (v - m).exp()).sum::<f64>().ln();
    for (o, &v) in out.iter_mut().zip(x) {
        *o = v - lse;
    }
}

impl Tape {
    /// A tape that records gradients for parameters and variables.
    pub fn new() -> Self {
        Tape {
            inner: RefCell::new(Inner::default()),
            grad_enabled: true,
        }
    }

    /// A tape for evaluation only: parameters are registered as constants.
    pub fn inference() -> Self {
        Tape {
            inner: RefCell::new(Inner::default()),
            grad_enabled: false,
        }
    }

    pub fn len(&self) -> usize {
        self.inner.borrow().nodes.len()
    }

    pub fn is_empty(&self) -> bool {
        self.len() == 0
    }

    fn push(&self, value: Tensor, op: Op) -> Var {
        let mut inner = self.inner.borrow_mut();
        let requires_grad = op
            .inputs()
            .iter()
            .any(|v| inner.nodes[v.0].requires_grad);
        let op = if requires_grad { op } else { Op::Leaf };
        inner.nodes.push(Node {
            value,
            op,
            requires_grad,
        });
        Var(inner.nodes.len() - 1)
    }

    fn leaf(&self, value: Tensor, requires_grad: bool) -> Var {
        let mut inner = self.inner.borrow_mut();
        inner.nodes.push(Node {
            value,
            op: Op::Leaf,
            requires_grad,
        });
        Var(inner.nodes.len() - 1)
    }

    /// A differentiable input.
    pub fn variable(&self, value: Tensor) -> Var {
        self.leaf(value, self.grad_enabled)
    }

    /// A detached input; no gradient flows into it.
    pub fn constant(&self, value: Tensor) -> Var {
        self.leaf(value, false)
    }

    /// Registers a parameter, once per tape.
    pub fn param(&self, store: &ParamStore, id: ParamId) -> Var {
        if let Some(v) = self.inner.borrow().params.get(&id.index()) {
            return *v;
        }
        let v = self.leaf(store.value(id).clone(), self.grad_enabled);
        self.inner.borrow_mut().params.insert(id.index(), v);
        v
    }

    pub fn value(&self, v: Var) -> Ref<'_, Tensor> {
        Ref::map(self.inner.borrow(), |i| &i.nodes[v.0].value)
    }

    pub fn shape(&self, v: Var) -> Vec<usize> {
        self.value(v).shape().to_vec()
    }

    pub fn requires_grad(&self, v: Var) -> bool {
        self.inner.borrow().nodes[v.0].requires_grad
    }

    fn unary(&self, a: Var, f: impl Fn(f64) -> f64, op: Op) -> Var {
        let out = self.value(a).map(f);
        self.push(out, op)
    }

    fn matrix(&self, op: &'static str, v: Var) -> Result<(usize, usize)> {
        let t = self.value(v);
        if !t.is_matrix() {
            return Err(Error::shape(op, format!("expected a matrix, got {:?}", t.shape())));
        }
        Ok((t.rows(), t.cols()))
    }

    fn same_shape(&self, op: &'static str, a: Var, b: Var) -> Result<()> {
        let (sa, sb) = (self.shape(a), self.shape(b));
        if sa != sb {
            return Err(Error::shape(op, format!("{sa:?} vs {sb:?}")));
        }
        Ok(())
    }

    pub fn matmul(&self, a: Var, b: Var) -> Result<Var> {
        let (m, k) = self.matrix("matmul", a)?;
        let (k2, n) = self.matrix("matmul", b)?;
        if k != k2 {
            return Err(Error::shape("matmul", format!("[{m}, {k}] x [{k2}, {n}]")));
        }
        let out = matmul_raw(self.value(a).data(), self.value(b).data(), m, k, n);
        Ok(self.push(out, Op::MatMul(a, b)))
    }

    /// `a · bᵀ`.
    pub fn matmul_nt(&self, a: Var, b: Var) -> Result<Var> {
        let (m, k) = self.matrix("matmul_nt", a)?;
        let (n, k2) = self.matrix("matmul_nt", b)?;
        if k != k2 {
            return Err(Error::shape("matmul_nt", format!("[{m}, {k}] x [{n}, {k2}]ᵀ")));
        }
        let out = matmul_nt_raw(self.value(a).data(), self.value(b).data(), m, k, n);
        Ok(self.push(out, Op::MatMulNt(a, b)))
    }

    fn zip(&self, op: &'static str, a: Var, b: Var, f: impl Fn(f64, f64) -> f64) -> Result<Tensor> {
        self.same_shape(op, a, b)?;
        let (ta, tb) = (self.value(a), self.value(b));
        let data = ta.data().iter().zip(tb.data()).map(|(&x, &y)| f(x, y)).collect();
        Tensor::new(ta.shape().to_vec(), data)
    }

    pub fn add(&self, a: Var, b: Var) -> Result<Var> {
        let out = self.zip("add", a, b, |x, y| x + y)?;
        Ok(self.push(out, Op::Add(a, b)))
    }

    pub fn sub(&self, a: Var, b: Var) -> Result<Var> {
        let out = self.zip("sub", a, b, |x, y| x - y)?;
        Ok(self.push(out, Op::Sub(a, b)))
    }

    /// Elementwise product.
    pub fn mul(&self, a: Var, b: Var) -> Result<Var> {
        let out = self.zip("mul", a, b, |x, y| x * y)?;
        Ok(self.push(out, Op::Mul(a, b)))
    }

    /// Adds the `1 × n` row `bias` to every row of `a`.
    pub fn add_row(&self, a: Var, bias: Var) -> Result<Var> {
        let (_, n) = self.matrix("add_row", a)?;
        let (br, bn) = self.matrix("add_row", bias)?;
        if br != 1 || bn != n {
            return Err(Error::shape(
                "add_row",
                format!("bias [{br}, {bn}] for {n} columns"),
            ));
        }
        let mut out = self.value(a).clone();
        {
            let b = self.value(bias);
            for r in 0..out.rows() {
                for (o, &x) in out.row_mut(r).iter_mut().zip(b.data()) {
                    *o += x;
                }
            }
        }
        Ok(self.push(out, Op::AddRow(a, bias)))
    }

    pub fn scale(&self, a: Var, s: f64) -> Var {
        self.unary(a, |x| x * s, Op::Scale(a, s))
    }

    pub fn concat_cols(&self, parts: &[Var]) -> Result<Var> {
        if parts.is_empty() {
            return Err(Error::shape("concat_cols", "no inputs"));
        }
        let rows = self.matrix("concat_cols", parts[0])?.0;
        let mut widths = Vec::with_capacity(parts.len());
        for &p in parts {
            let (r, c) = self.matrix("concat_cols", p)?;
            if r != rows {
                return Err(Error::shape("concat_cols", format!("row count {r} vs {rows}")));
            }
            widths.push(c);
        }
        let total: usize = widths.iter().sum();
        let mut data = Vec::with_capacity(rows * total);
        for r in 0..rows {
            for &p in parts {
                data.extend_from_slice(self.value(p).row(r));
            }
        }
        Ok(self.push(Tensor::matrix(rows, total, data)?, Op::ConcatCols(parts.to_vec())))
    }

    pub fn concat_rows(&self, parts: &[Var]) -> Result<Var> {
        if parts.is_empty() {
            return Err(Error::shape("concat_rows", "no inputs"));
        }
        let cols = self.matrix("concat_rows", parts[0])?.1;
        let mut rows = 0;
        let mut data = Vec::new();
        for &p in parts {
            let (r, c) = self.matrix("concat_rows", p)?;
            if c != cols {
                return Err(Error::shape("concat_rows", format!("column count {c} vs {cols}")));
            }
            rows += r;
            data.extend_from_slice(self.value(p).data());
        }
        Ok(self.push(Tensor::matrix(rows, cols, data)?, Op::ConcatRows(parts.to_vec())))
    }

    /// Columns `start..end`.
    pub fn slice_cols(&self, a: Var, start: usize, end: usize) -> Result<Var> {
        let (rows, cols) = self.matrix("slice_cols", a)?;
        if start >= end || end > cols {
            return Err(Error::shape(
                "slice_cols",
                format!("range {start}..{end} of {cols} columns"),
            ));
        }
        let data = {
            let t = self.value(a);
            (0..rows).flat_map(|r| t.row(r)[start..end].to_vec()).collect()
        };
        Ok(self.push(Tensor::matrix(rows, end - start, data)?, Op::SliceCols(a, start)))
    }

    /// Rows `start..end`.
    pub fn slice_rows(&self, a: Var, start: usize, end: usize) -> Result<Var> {
        let idx: Vec<usize> = (start..end).collect();
        self.gather_rows(a, &idx)
    }

    /// Rows of `a` picked by index (repeats allowed).
    pub fn gather_rows(&self, a: Var, idx: &[usize]) -> Result<Var> {
        let (rows, cols) = self.matrix("gather_rows", a)?;
        if idx.is_empty() {
            return Err(Error::shape("gather_rows", "empty index list"));
        }
        if let Some(&bad) = idx.iter().find(|&&i| i >= rows) {
            return Err(Error::shape("gather_rows", format!("row {bad} of {rows}")));
        }
        let data = {
            let t = self.value(a);
            idx.iter().flat_map(|&i| t.row(i).to_vec()).collect()
        };
        Ok(self.push(
            Tensor::matrix(idx.len(), cols, data)?,
            Op::GatherRows(a, idx.to_vec()),
        ))
    }

    /// Embedding lookup: rows of `table` by index.
    pub fn embedding(&self, table: Var, idx: &[usize]) -> Result<Var> {
        self.gather_rows(table, idx)
    }

    /// Elementwise maximum over a set of equally shaped tensors.
    pub fn max_of(&self, parts: &[Var]) -> Result<Var> {
        let Some(&first) = parts.first() else {
            return Err(Error::shape("max_of", "empty set"));
        };
        for &p in &parts[1..] {
            self.same_shape("max_of", first, p)?;
        }
        let mut out = self.value(first).clone();
        let mut arg = vec![0u32; out.numel()];
        for (k, &p) in parts.iter().enumerate().skip(1) {
            let t = self.value(p);
            for (j, (&x, o)) in t.data().iter().zip(out.data_mut()).enumerate() {
                if x > *o {
                    *o = x;
                    arg[j] = k as u32;
                }
            }
        }
        Ok(self.push(out, Op::MaxOf(parts.to_vec(), arg)))
    }

    /// Column-wise max over groups of rows; output row `g` pools `groups[g]`.
    pub fn segment_max(&self, a: Var, groups: &[Vec<usize>]) -> Result<Var> {
        let (rows, cols) = self.matrix("segment_max", a)?;
        let mut data = Vec::with_capacity(groups.len() * cols);
        let mut src = Vec::with_capacity(groups.len() * cols);
        {
            let t = self.value(a);
            for g in groups {
                let Some(&first) = g.first() else {
                    return Err(Error::Contract("segment_max over an empty group".into()));
                };
                if let Some(&bad) = g.iter().find(|&&r| r >= rows) {
                    return Err(Error::shape("segment_max", format!("row {bad} of {rows}")));
                }
                for c in 0..cols {
                    let mut best = first;
                    for &r in &g[1..] {
                        if t.at(r, c) > t.at(best, c) {
                            best = r;
                        }
                    }
                    data.push(t.at(best, c));
                    src.push(best);
                }
            }
        }
        Ok(self.push(Tensor::matrix(groups.len(), cols, data)?, Op::SegmentMax(a, src)))
    }

    /// Row-wise softmax.
    pub fn softmax(&self, a: Var) -> Result<Var> {
        let (rows, cols) = self.matrix("softmax", a)?;
        let mut out = Tensor::zeros(&[rows, cols]);
        {
            let t = self.value(a);
            for r in 0..rows {
                row_softmax(t.row(r), out.row_mut(r));
            }
        }
        Ok(self.push(out, Op::Softmax(a)))
    }

    /// Row-wise log-softmax.
    pub fn log_softmax(&self, a: Var) -> Result<Var> {
        let (rows, cols) = self.matrix("log_softmax", a)?;
        let mut out = Tensor::zeros(&[rows, cols]);
        {
            let t = self.value(a);
            for r in 0..rows {
                row_log_softmax(t.row(r), out.row_mut(r));
            }
        }
        Ok(self.push(out, Op::LogSoftmax(a)))
    }

    /// Row-wise layer normalization with `1 × n` gain and bias.
    pub fn layer_norm(&self, x: Var, gain: Var, bias: Var) -> Result<Var> {
        let (rows, cols) = self.matrix("layer_norm", x)?;
        for p in [gain, bias] {
            if self.shape(p) != [1, cols] {
                return Err(Error::shape(
                    "layer_norm",
                    format!("affine {:?} for {cols} columns", self.shape(p)),
                ));
            }
        }
        let mut out = Tensor::zeros(&[rows, cols]);
        let mut xhat = vec![0.0; rows * cols];
        let mut inv_std = vec![0.0; rows];
        {
            let (t, g, b) = (self.value(x), self.value(gain), self.value(bias));
            let n = cols as f64;
            for r in 0..rows {
                let row = t.row(r);
                let mean = row.iter().sum::<f64>() / n;
                let var = row.iter().map(|v| (v - mean).powi(2)).sum::<f64>() / n;
                let is = 1.0 / (var + LN_EPS).sqrt();
                inv_std[r] = is;
                let o = out.row_mut(r);
                for c in 0..cols {
                    let h = (row[c] - mean) * is;
                    xhat[r * cols + c] = h;
                    o[c] = h * g.data()[c] + b.data()[c];
                }
            }
        }
        Ok(self.push(
            out,
            Op::LayerNorm {
                x,
                gain,
                bias,
                xhat,
                inv_std,
            },
        ))
    }

    pub fn relu(&self, a: Var) -> Var {
        self.unary(a, |x| x.max(0.0), Op::Relu(a))
    }

    pub fn sigmoid(&self, a: Var) -> Var {
        self.unary(a, |x| 1.0 / (1.0 + (-x).exp()), Op::Sigmoid(a))
    }

    pub fn exp(&self, a: Var) -> Var {
        self.unary(a, f64::exp, Op::Exp(a))
    }

    /// Clamps into `[lo, hi]`; gradient is zero outside the interval.
    pub fn clamp(&self, a: Var, lo: f64, hi: f64) -> Var {
        self.unary(a, |x| x.clamp(lo, hi), Op::Clamp(a, lo, hi))
    }

    pub fn sum(&self, a: Var) -> Var {
        let s = self.value(a).data().iter().sum();
        self.push(Tensor::scalar(s), Op::Sum(a))
    }

    pub fn mean(&self, a: Var) -> Var {
        let s = {
            let t = self.value(a);
            t.data().iter().sum::<f64>() / t.numel() as f64
        };
        self.push(Tensor::scalar(s), Op::Mean(a))
    }

    /// Weighted mean squared error against a fixed target:
    /// `Σ w·(p − t)² / Σ w`, zero when every weight is zero.
    pub fn mse(&self, pred: Var, target: &Tensor, weight: &[f64]) -> Result<Var> {
        let p = self.value(pred).clone();
        if p.shape() != target.shape() || weight.len() != p.numel() {
            return Err(Error::shape(
                "mse",
                format!(
                    "pred {:?}, target {:?}, {} weights",
                    p.shape(),
                    target.shape(),
                    weight.len()
                ),
            ));
        }
        let count: f64 = weight.iter().sum();
        let total: f64 = p
            .data()
            .iter()
            .zip(target.data())
            .zip(weight)
            .map(|((a, b), w)| w * (a - b).powi(2))
            .sum();
        let v = if count > 0.0 { total / count } else { 0.0 };
        Ok(self.push(
            Tensor::scalar(v),
            Op::Mse {
                pred,
                target: target.data().to_vec(),
                weight: weight.to_vec(),
                count,
            },
        ))
    }

    /// Summed negative log-likelihood of row-wise targets under
    /// `softmax(logits)`. Rows whose target is `None` do not contribute.
    pub fn cross_entropy(&self, logits: Var, targets: &[Option<usize>]) -> Result<Var> {
        let (rows, cols) = self.matrix("cross_entropy", logits)?;
        if targets.len() != rows {
            return Err(Error::shape(
                "cross_entropy",
                format!("{} targets for {rows} rows", targets.len()),
            ));
        }
        let mut total = 0.0;
        {
            let t = self.value(logits);
            let mut buf = vec![0.0; cols];
            for (r, target) in targets.iter().enumerate() {
                if let Some(k) = *target {
                    if k >= cols {
                        return Err(Error::shape(
                            "cross_entropy",
                            format!("class {k} of {cols}"),
                        ));
                    }
                    row_log_softmax(t.row(r), &mut buf);
                    total -= buf[k];
                }
            }
        }
        Ok(self.push(
            Tensor::scalar(total),
            Op::CrossEntropy {
                logits,
                targets: targets.to_vec(),
            },
        ))
    }

    /// `½ Σ (μ² + σ² − 1 − log σ²)`, the KL divergence from `N(μ, diag σ²)`
    /// to the standard normal.
    pub fn gaussian_kl(&self, mu: Var, logvar: Var) -> Result<Var> {
        self.same_shape("gaussian_kl", mu, logvar)?;
        let v = {
            let (m, l) = (self.value(mu), self.value(logvar));
            0.5 * m
                .data()
                .iter()
                .zip(l.data())
                .map(|(&m, &l)| m * m + l.exp() - 1.0 - l)
                .sum::<f64>()
        };
        Ok(self.push(Tensor::scalar(v), Op::GaussianKl { mu, logvar }))
    }

    /// `μ + exp(½ log σ²) · ε` for a fixed noise draw `ε`.
    pub fn reparam(&self, mu: Var, logvar: Var, eps: &Tensor) -> Result<Var> {
        self.same_shape("reparam", mu, logvar)?;
        if self.shape(mu) != eps.shape() {
            return Err(Error::shape(
                "reparam",
                format!("noise {:?} for {:?}", eps.shape(), self.shape(mu)),
            ));
        }
        let out = {
            let (m, l) = (self.value(mu), self.value(logvar));
            let data = m
                .data()
                .iter()
                .zip(l.data())
                .zip(eps.data())
                .map(|((&m, &l), &e)| m + (0.5 * l).exp() * e)
                .collect();
            Tensor::new(m.shape().to_vec(), data)?
        };
        Ok(self.push(
            out,
            Op::Reparam {
                mu,
                logvar,
                eps: eps.data().to_vec(),
            },
        ))
    }

    /// Propagates gradients from a one-element `loss` to every node that
    /// requires them. A tape can only be differentiated once.
    pub fn backward(&self, loss: Var) -> Result<Gradients> {
        let mut inner = self.inner.borrow_mut();
        if inner.consumed {
            return Err(Error::Contract(
                "backward called twice on the same tape; run the forward pass again".into(),
            ));
        }
        if inner.nodes[loss.0].value.numel() != 1 {
            return Err(Error::Contract(format!(
                "backward needs a scalar loss, got shape {:?}",
                inner.nodes[loss.0].value.shape()
            )));
        }
        inner.consumed = true;
        let nodes = &inner.nodes;
        let mut grads: Vec<Option<Tensor>> = vec![None; nodes.len()];
        grads[loss.0] = Some(Tensor::full(nodes[loss.0].value.shape(), 1.0));

        for i in (0..=loss.0).rev() {
            let node = &nodes[i];
            if !node.requires_grad || matches!(node.op, Op::Leaf) {
                continue;
            }
            let Some(g) = grads[i].take() else { continue };
            backprop(nodes, &mut grads, node, &g);
            grads[i] = Some(g);
        }
        let params = inner.params.iter().map(|(&p, &v)| (p, v)).collect();
        Ok(Gradients { grads, params })
    }
}

/// Zero-initialized gradient buffer of `v`, or `None` when `v` is detached.
fn buf<'a>(nodes: &[Node], grads: &'a mut [Option<Tensor>], v: Var) -> Option<&'a mut Tensor> {
    if !nodes[v.0].requires_grad {
        return None;
    }
    Some(grads[v.0].get_or_insert_with(|| Tensor::zeros(nodes[v.0].value.shape())))
}

fn acc(nodes: &[Node], grads: &mut [Option<Tensor>], v: Var, t: &Tensor) {
    if let Some(b) = buf(nodes, grads, v) {
        b.add_assign(t);
    }
}

fn acc_map(nodes: &[Node], grads: &mut [Option<Tensor>], v: Var, f: impl Fn(usize) -> f64) {
    if let Some(b) = buf(nodes, grads, v) {
        for (j, x) in b.data_mut().iter_mut().enumerate() {
            *x += f(j);
        }
    }
}

fn backprop(nodes: &[Node], grads: &mut [Option<Tensor>], node: &Node, g: &Tensor) {
    let val = |v: Var| &nodes[v.0].value;
    let gd = g.data();
    let y = node.value.data();
    match &node.op {
        Op::Leaf => {}
        Op::MatMul(a, b) => {
            let (ta, tb) = (val(*a), val(*b));
            let (m, k, n) = (ta.rows(), ta.cols(), tb.cols());
            if nodes[a.0].requires_grad {
                acc(nodes, grads, *a, &matmul_nt_raw(gd, tb.data(), m, n, k));
            }
            if nodes[b.0].requires_grad {
                acc(nodes, grads, *b, &matmul_tn_raw(ta.data(), gd, m, k, n));
            }
        }
        Op::MatMulNt(a, b) => {
            let (ta, tb) = (val(*a), val(*b));
            let (m, k, n) = (ta.rows(), ta.cols(), tb.rows());
            if nodes[a.0].requires_grad {
                acc(nodes, grads, *a, &matmul_raw(gd, tb.data(), m, n, k));
            }
            if nodes[b.0].requires_grad {
                acc(nodes, grads, *b, &matmul_tn_raw(gd, ta.data(), m, n, k));
            }
        }
        Op::Add(a, b) => {
            acc(nodes, grads, *a, g);
            acc(nodes, grads, *b, g);
        }
        Op::Sub(a, b) => {
            acc(nodes, grads, *a, g);
            acc_map(nodes, grads, *b, |j| -gd[j]);
        }
        Op::Mul(a, b) => {
            let (da, db) = (val(*a).data(), val(*b).data());
            acc_map(nodes, grads, *a, |j| gd[j] * db[j]);
            acc_map(nodes, grads, *b, |j| gd[j] * da[j]);
        }
        Op::AddRow(a, bias) => {
            acc(nodes, grads, *a, g);
            let cols = g.cols();
            acc_map(nodes, grads, *bias, |c| {
                (0..g.rows()).map(|r| gd[r * cols + c]).sum()
            });
        }
        Op::Scale(a, s) => acc_map(nodes, grads, *a, |j| gd[j] * s),
        Op::ConcatCols(parts) => {
            let (rows, total) = (g.rows(), g.cols());
            let mut off = 0;
            for &p in parts {
                let w = val(p).cols();
                acc_map(nodes, grads, p, |j| gd[(j / w) * total + off + j % w]);
                off += w;
                debug_assert!(off <= total && rows == val(p).rows());
            }
        }
        Op::ConcatRows(parts) => {
            let mut off = 0;
            for &p in parts {
                let n = val(p).numel();
                acc_map(nodes, grads, p, |j| gd[off + j]);
                off += n;
            }
        }
        Op::SliceCols(a, start) => {
            let (w, cols) = (g.cols(), val(*a).cols());
            let start = *start;
            acc_map(nodes, grads, *a, |j| {
                let (r, c) = (j / cols, j % cols);
                if c >= start && c < start + w {
                    gd[r * w + c - start]
                } else {
                    0.0
                }
            });
        }
        Op::GatherRows(a, idx) => {
            if let Some(b) = buf(nodes, grads, *a) {
                for (o, &i) in idx.iter().enumerate() {
                    for (x, &d) in b.row_mut(i).iter_mut().zip(g.row(o)) {
                        *x += d;
                    }
                }
            }
        }
        Op::MaxOf(parts, arg) => {
            for (k, &p) in parts.iter().enumerate() {
                acc_map(nodes, grads, p, |j| if arg[j] as usize == k { gd[j] } else { 0.0 });
            }
        }
        Op::SegmentMax(a, src) => {
            if let Some(b) = buf(nodes, grads, *a) {
                let cols = g.cols();
                for (j, &r) in src.iter().enumerate() {
                    b.data_mut()[r * cols + j % cols] += gd[j];
                }
            }
        }
        Op::Softmax(a) => {
            let cols = g.cols();
            acc_map(nodes, grads, *a, |j| {
                let r = j / cols;
                let dot: f64 = (0..cols).map(|c| gd[r * cols + c] * y[r * cols + c]).sum();
                y[j] * (gd[j] - dot)
            });
        }
        Op::LogSoftmax(a) => {
            if let Some(b) = buf(nodes, grads, *a) {
                let cols = g.cols();
                for r in 0..g.rows() {
                    let gs: f64 = g.row(r).iter().sum();
                    for c in 0..cols {
                        let j = r * cols + c;
                        b.data_mut()[j] += gd[j] - y[j].exp() * gs;
                    }
                }
            }
        }
        Op::LayerNorm {
            x,
            gain,
            bias,
            xhat,
            inv_std,
        } => {
            let cols = g.cols();
            let rows = g.rows();
            let gamma = val(*gain).data();
            acc_map(nodes, grads, *gain, |c| {
                (0..rows).map(|r| gd[r * cols + c] * xhat[r * cols + c]).sum()
            });
            acc_map(nodes, grads, *bias, |c| (0..rows).map(|r| gd[r * cols + c]).sum());
            if let Some(b) = buf(nodes, grads, *x) {
                let n = cols as f64;
                for r in 0..rows {
                    let dx: Vec<f64> = (0..cols).map(|c| gd[r * cols + c] * gamma[c]).collect();
                    let s1: f64 = dx.iter().sum();
                    let s2: f64 = (0..cols).map(|c| dx[c] * xhat[r * cols + c]).sum();
                    let o = b.row_mut(r);
                    for c in 0..cols {
                        o[c] += inv_std[r] / n * (n * dx[c] - s1 - xhat[r * cols + c] * s2);
                    }
                }
            }
        }
        Op::Relu(a) => {
            let x = val(*a).data();
            acc_map(nodes, grads, *a, |j| if x[j] > 0.0 { gd[j] } else { 0.0 });
        }
        Op::Sigmoid(a) => acc_map(nodes, grads, *a, |j| gd[j] * y[j] * (1.0 - y[j])),
        Op::Exp(a) => acc_map(nodes, grads, *a, |j| gd[j] * y[j]),
        Op::Clamp(a, lo, hi) => {
            let x = val(*a).data();
            acc_map(nodes, grads, *a, |j| {
                if x[j] >= *lo && x[j] <= *hi {
                    gd[j]
                } else {
                    0.0
                }
            });
        }
        Op::Sum(a) => acc_map(nodes, grads, *a, |_| gd[0]),
        Op::Mean(a) => {
            let n = val(*a).numel() as f64;
            acc_map(nodes, grads, *a, |_| gd[0] / n);
        }
        Op::Mse {
            pred,
            target,
            weight,
            count,
        } => {
            if *count > 0.0 {
                let p = val(*pred).data();
                acc_map(nodes, grads, *pred, |j| {
                    gd[0] * 2.0 * weight[j] * (p[j] - target[j]) / count
                });
            }
        }
        Op::CrossEntropy { logits, targets } => {
            if let Some(b) = buf(nodes, grads, *logits) {
                let t = val(*logits);
                let mut p = vec![0.0; t.cols()];
                for (r, target) in targets.iter().enumerate() {
                    if let Some(k) = *target {
                        row_softmax(t.row(r), &mut p);
                        p[k] -= 1.0;
                        for (x, &d) in b.row_mut(r).iter_mut().zip(&p) {
                            *x += gd[0] * d;
                        }
                    }
                }
            }
        }
        Op::GaussianKl { mu, logvar } => {
            let (m, l) = (val(*mu).data(), val(*logvar).data());
            acc_map(nodes, grads, *mu, |j| gd[0] * m[j]);
            acc_map(nodes, grads, *logvar, |j| gd[0] * 0.5 * (l[j].exp() - 1.0));
        }
        Op::Reparam { mu, logvar, eps } => {
            let l = val(*logvar).data();
            acc(nodes, grads, *mu, g);
            acc_map(nodes, grads, *logvar, |j| {
                gd[j] * 0.5 * (0.5 * l[j]).exp() * eps[j]
            });
        }
    }
}
