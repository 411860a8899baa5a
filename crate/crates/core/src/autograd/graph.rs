//! Tape-based reverse-mode differentiation over dense tensors.
//!
//! A [`Graph`] records every operation as a node in push order, so the
//! node list is already a topological order and backward is a single
//! reverse sweep. Parameters are borrowed from a [`ParamStore`] rather than
//! copied; each parameter gets at most one leaf node per graph.
//!
//! Every op checks that its output is finite. A NaN or infinity aborts the
//! forward pass with [`Error::Numeric`] instead of propagating.

use std::collections::BTreeMap;

use super::params::{ParamId, ParamStore};
use super::tensor::Tensor;
use crate::error::{Error, Result};

/// Handle to a node in a [`Graph`].
#[derive(Clone, Copy, Debug, PartialEq, Eq, Hash, PartialOrd, Ord)]
pub struct Var(usize);

enum Value {
    Owned(Tensor),
    Param(ParamId),
}

enum Op {
    Leaf,
    Add(Var, Var),
    Mul(Var, Var),
    Scale(Var, f64),
    Tanh(Var),
    Sigmoid(Var),
    Relu(Var),
    Linear { x: Var, w: Var, b: Option<Var> },
    MatMul(Var, Var),
    Transpose(Var),
    MatVec(Var, Var),
    WeightedSum(Var, Var),
    Softmax { x: Var, mask: Option<Vec<bool>> },
    Sum(Var),
    SumRows(Var),
    MeanRows { x: Var, mask: Vec<bool> },
    Dot(Var, Var),
    Concat(Vec<Var>),
    Stack(Vec<Var>),
    ConcatCols(Vec<Var>),
    Gather { table: Var, ids: Vec<usize> },
    Reshape(Var),
    Conv1dRelu { x: Var, kernel: Var, bias: Var },
    Nll { rho: Var, labels: Vec<f64> },
}

impl Op {
    fn name(&self) -> &'static str {
        match self {
            Op::Leaf => "leaf",
            Op::Add(..) => "add",
            Op::Mul(..) => "mul",
            Op::Scale(..) => "scale",
            Op::Tanh(_) => "tanh",
            Op::Sigmoid(_) => "sigmoid",
            Op::Relu(_) => "relu",
            Op::Linear { .. } => "linear",
            Op::MatMul(..) => "matmul",
            Op::Transpose(_) => "transpose",
            Op::MatVec(..) => "matvec",
            Op::WeightedSum(..) => "weighted_sum",
            Op::Softmax { .. } => "softmax",
            Op::Sum(_) => "sum",
            Op::SumRows(_) => "sum_rows",
            Op::MeanRows { .. } => "mean_rows",
            Op::Dot(..) => "dot",
            Op::Concat(_) => "concat",
            Op::Stack(_) => "stack",
            Op::ConcatCols(_) => "concat_cols",
            Op::Gather { .. } => "gather",
            Op::Reshape(_) => "reshape",
            Op::Conv1dRelu { .. } => "conv1d",
            Op::Nll { .. } => "nll",
        }
    }
}

struct Node {
    value: Value,
    op: Op,
    needs_grad: bool,
}

/// Loss clamp for the log terms of the negative log-likelihood.
pub const NLL_CLAMP: f64 = 1e-12;

pub struct Graph<'p> {
    store: &'p ParamStore,
    nodes: Vec<Node>,
    /// Leaf for each parameter index, filled on first use.
    param_vars: Vec<Option<Var>>,
    track_params: bool,
    backward_done: bool,
}

/// Gradients produced by [`Graph::backward`].
#[derive(Debug, Default)]
pub struct Gradients {
    params: BTreeMap<ParamId, Tensor>,
    leaves: BTreeMap<Var, Tensor>,
}

impl Gradients {
    /// Gradient for a parameter, or `None` if the loss never reached it.
    pub fn param(&self, id: ParamId) -> Option<&Tensor> {
        self.params.get(&id)
    }

    /// Gradient for a leaf created with [`Graph::leaf`]. Unreached leaves
    /// hold zeros.
    pub fn wrt(&self, v: Var) -> Option<&Tensor> {
        self.leaves.get(&v)
    }

    pub fn params(&self) -> impl Iterator<Item = (ParamId, &Tensor)> {
        self.params.iter().map(|(k, v)| (*k, v))
    }

    pub(crate) fn params_mut(&mut self) -> impl Iterator<Item = (&ParamId, &mut Tensor)> {
        self.params.iter_mut()
    }
}

fn dim_err(op: &str, msg: impl std::fmt::Display) -> Error {
    Error::Dimension(format!("{op}: {msg}"))
}

impl<'p> Graph<'p> {
    /// Graph whose parameter leaves accumulate gradients.
    pub fn new(store: &'p ParamStore) -> Self {
        Graph {
            store,
            nodes: Vec::new(),
            param_vars: vec![None; store.len()],
            track_params: true,
            backward_done: false,
        }
    }

    /// Graph for inference: parameters are read but never differentiated.
    pub fn frozen(store: &'p ParamStore) -> Self {
        Graph {
            track_params: false,
            ..Graph::new(store)
        }
    }

    pub fn store(&self) -> &'p ParamStore {
        self.store
    }

    pub fn len(&self) -> usize {
        self.nodes.len()
    }

    pub fn is_empty(&self) -> bool {
        self.nodes.is_empty()
    }

    pub fn value(&self, v: Var) -> &Tensor {
        match &self.nodes[v.0].value {
            Value::Owned(t) => t,
            Value::Param(id) => self.store.value(*id),
        }
    }

    pub fn shape(&self, v: Var) -> &[usize] {
        self.value(v).shape()
    }

    fn needs(&self, v: Var) -> bool {
        self.nodes[v.0].needs_grad
    }

    fn push(&mut self, op: Op, out: Tensor) -> Result<Var> {
        if !out.is_finite() {
            return Err(Error::Numeric(format!(
                "non-finite output from {}",
                op.name()
            )));
        }
        let needs_grad = match &op {
            Op::Leaf => false,
            Op::Add(a, b) | Op::Mul(a, b) | Op::MatMul(a, b) | Op::MatVec(a, b) => {
                self.needs(*a) || self.needs(*b)
            }
            Op::WeightedSum(a, b) | Op::Dot(a, b) => self.needs(*a) || self.needs(*b),
            Op::Scale(a, _)
            | Op::Tanh(a)
            | Op::Sigmoid(a)
            | Op::Relu(a)
            | Op::Transpose(a)
            | Op::Sum(a)
            | Op::Reshape(a)
            | Op::SumRows(a) => self.needs(*a),
            Op::Softmax { x, .. } | Op::MeanRows { x, .. } => self.needs(*x),
            Op::Linear { x, w, b } => {
                self.needs(*x) || self.needs(*w) || b.is_some_and(|b| self.needs(b))
            }
            Op::Concat(vs) | Op::Stack(vs) | Op::ConcatCols(vs) => {
                vs.iter().any(|v| self.needs(*v))
            }
            Op::Gather { table, .. } => self.needs(*table),
            Op::Conv1dRelu { x, kernel, bias } => {
                self.needs(*x) || self.needs(*kernel) || self.needs(*bias)
            }
            Op::Nll { rho, .. } => self.needs(*rho),
        };
        self.nodes.push(Node {
            value: Value::Owned(out),
            op,
            needs_grad,
        });
        Ok(Var(self.nodes.len() - 1))
    }

    /// A value that never receives a gradient.
    pub fn constant(&mut self, t: Tensor) -> Result<Var> {
        if !t.is_finite() {
            return Err(Error::Numeric("non-finite constant".into()));
        }
        self.nodes.push(Node {
            value: Value::Owned(t),
            op: Op::Leaf,
            needs_grad: false,
        });
        Ok(Var(self.nodes.len() - 1))
    }

    /// A free input whose gradient is reported by [`Gradients::wrt`].
    pub fn leaf(&mut self, t: Tensor) -> Result<Var> {
        let v = self.constant(t)?;
        self.nodes[v.0].needs_grad = true;
        Ok(v)
    }

    /// The leaf for a stored parameter, created on first use.
    pub fn param(&mut self, id: ParamId) -> Var {
        if let Some(v) = self.param_vars[id.0] {
            return v;
        }
        let needs_grad = self.track_params && self.store.get(id).requires_grad;
        self.nodes.push(Node {
            value: Value::Param(id),
            op: Op::Leaf,
            needs_grad,
        });
        let v = Var(self.nodes.len() - 1);
        self.param_vars[id.0] = Some(v);
        v
    }

    pub fn zeros(&mut self, shape: &[usize]) -> Result<Var> {
        self.constant(Tensor::zeros(shape))
    }

    pub fn add(&mut self, a: Var, b: Var) -> Result<Var> {
        let (ta, tb) = (self.value(a), self.value(b));
        if ta.shape() != tb.shape() {
            return Err(dim_err("add", format!("{:?} vs {:?}", ta.shape(), tb.shape())));
        }
        let data = ta.data().iter().zip(tb.data()).map(|(x, y)| x + y).collect();
        let out = Tensor::new(ta.shape().to_vec(), data)?;
        self.push(Op::Add(a, b), out)
    }

    pub fn mul(&mut self, a: Var, b: Var) -> Result<Var> {
        let (ta, tb) = (self.value(a), self.value(b));
        if ta.shape() != tb.shape() {
            return Err(dim_err("mul", format!("{:?} vs {:?}", ta.shape(), tb.shape())));
        }
        let data = ta.data().iter().zip(tb.data()).map(|(x, y)| x * y).collect();
        let out = Tensor::new(ta.shape().to_vec(), data)?;
        self.push(Op::Mul(a, b), out)
    }

    pub fn scale(&mut self, a: Var, c: f64) -> Result<Var> {
        let ta = self.value(a);
        let out = Tensor::new(ta.shape().to_vec(), ta.data().iter().map(|x| x * c).collect())?;
        self.push(Op::Scale(a, c), out)
    }

    fn map(&mut self, a: Var, f: impl Fn(f64) -> f64, op: Op) -> Result<Var> {
        let ta = self.value(a);
        let out = Tensor::new(ta.shape().to_vec(), ta.data().iter().map(|&x| f(x)).collect())?;
        self.push(op, out)
    }

    pub fn tanh(&mut self, a: Var) -> Result<Var> {
        self.map(a, f64::tanh, Op::Tanh(a))
    }

    pub fn sigmoid(&mut self, a: Var) -> Result<Var> {
        self.map(a, sigmoid, Op::Sigmoid(a))
    }

    pub fn relu(&mut self, a: Var) -> Result<Var> {
        self.map(a, |x| x.max(0.0), Op::Relu(a))
    }

    /// `x · wᵀ + b` for `x` of shape `[a]` or `[n, a]` and `w` of shape `[o, a]`.
    pub fn linear(&mut self, x: Var, w: Var, b: Option<Var>) -> Result<Var> {
        let (tx, tw) = (self.value(x), self.value(w));
        if tw.rank() != 2 {
            return Err(dim_err("linear", format!("weight shape {:?}", tw.shape())));
        }
        let (o, a) = (tw.shape()[0], tw.shape()[1]);
        let (rows, out_shape) = match tx.shape() {
            [k] if *k == a => (1, vec![o]),
            [n, k] if *k == a => (*n, vec![*n, o]),
            s => return Err(dim_err("linear", format!("input {s:?} vs weight {:?}", tw.shape()))),
        };
        let bias = match b {
            Some(b) => {
                let tb = self.value(b);
                if tb.shape() != [o] {
                    return Err(dim_err("linear", format!("bias {:?}, expected [{o}]", tb.shape())));
                }
                Some(tb.data())
            }
            None => None,
        };
        let (xd, wd) = (tx.data(), tw.data());
        let mut out = vec![0.0; rows * o];
        for r in 0..rows {
            let xr = &xd[r * a..(r + 1) * a];
            for j in 0..o {
                let wr = &wd[j * a..(j + 1) * a];
                let mut acc = bias.map_or(0.0, |b| b[j]);
                for k in 0..a {
                    acc += xr[k] * wr[k];
                }
                out[r * o + j] = acc;
            }
        }
        let out = Tensor::new(out_shape, out)?;
        self.push(Op::Linear { x, w, b }, out)
    }

    pub fn matmul(&mut self, a: Var, b: Var) -> Result<Var> {
        let (ta, tb) = (self.value(a), self.value(b));
        let (n, k, m) = match (ta.shape(), tb.shape()) {
            ([n, k], [k2, m]) if k == k2 => (*n, *k, *m),
            (sa, sb) => return Err(dim_err("matmul", format!("{sa:?} x {sb:?}"))),
        };
        let (ad, bd) = (ta.data(), tb.data());
        let mut out = vec![0.0; n * m];
        for i in 0..n {
            for p in 0..k {
                let aip = ad[i * k + p];
                let brow = &bd[p * m..(p + 1) * m];
                let orow = &mut out[i * m..(i + 1) * m];
                for j in 0..m {
                    orow[j] += aip * brow[j];
                }
            }
        }
        let out = Tensor::matrix(n, m, out)?;
        self.push(Op::MatMul(a, b), out)
    }

    pub fn transpose(&mut self, a: Var) -> Result<Var> {
        let ta = self.value(a);
        let (n, m) = match ta.shape() {
            [n, m] => (*n, *m),
            s => return Err(dim_err("transpose", format!("{s:?}"))),
        };
        let d = ta.data();
        let mut out = vec![0.0; n * m];
        for i in 0..n {
            for j in 0..m {
                out[j * n + i] = d[i * m + j];
            }
        }
        let out = Tensor::matrix(m, n, out)?;
        self.push(Op::Transpose(a), out)
    }

    /// `rows · v` for `rows` of shape `[n, d]` and `v` of shape `[d]`.
    pub fn matvec(&mut self, rows: Var, v: Var) -> Result<Var> {
        let (tr, tv) = (self.value(rows), self.value(v));
        let (n, d) = match (tr.shape(), tv.shape()) {
            ([n, d], [d2]) if d == d2 => (*n, *d),
            (a, b) => return Err(dim_err("matvec", format!("{a:?} . {b:?}"))),
        };
        let (rd, vd) = (tr.data(), tv.data());
        let out = (0..n)
            .map(|i| rd[i * d..(i + 1) * d].iter().zip(vd).map(|(x, y)| x * y).sum())
            .collect();
        self.push(Op::MatVec(rows, v), Tensor::vector(out))
    }

    /// `Σ_i weights[i] · rows[i]`.
    pub fn weighted_sum(&mut self, weights: Var, rows: Var) -> Result<Var> {
        let (tw, tr) = (self.value(weights), self.value(rows));
        let (n, d) = match (tw.shape(), tr.shape()) {
            ([n], [n2, d]) if n == n2 => (*n, *d),
            (a, b) => return Err(dim_err("weighted_sum", format!("{a:?} over {b:?}"))),
        };
        let (wd, rd) = (tw.data(), tr.data());
        let mut out = vec![0.0; d];
        for i in 0..n {
            for j in 0..d {
                out[j] += wd[i] * rd[i * d + j];
            }
        }
        self.push(Op::WeightedSum(weights, rows), Tensor::vector(out))
    }

    /// Softmax over the last axis of a vector or matrix. Positions whose
    /// mask entry is `false` get exactly zero weight; a row with no
    /// unmasked position is all zeros.
    pub fn softmax(&mut self, x: Var, mask: Option<Vec<bool>>) -> Result<Var> {
        let tx = self.value(x);
        let (rows, cols) = match tx.shape() {
            [] => (1, 1),
            [c] => (1, *c),
            [r, c] => (*r, *c),
            s => return Err(dim_err("softmax", format!("{s:?}"))),
        };
        if cols == 0 {
            return Err(dim_err("softmax", "empty input"));
        }
        if let Some(m) = &mask {
            if m.len() != cols {
                return Err(dim_err("softmax", format!("mask length {} vs {cols}", m.len())));
            }
        }
        let d = tx.data();
        let mut out = vec![0.0; rows * cols];
        for r in 0..rows {
            let row = &d[r * cols..(r + 1) * cols];
            softmax_row(row, mask.as_deref(), &mut out[r * cols..(r + 1) * cols]);
        }
        let out = Tensor::new(tx.shape().to_vec(), out)?;
        self.push(Op::Softmax { x, mask }, out)
    }

    pub fn sum(&mut self, a: Var) -> Result<Var> {
        let s = self.value(a).data().iter().sum();
        self.push(Op::Sum(a), Tensor::scalar(s))
    }

    /// Column-wise sum of a `[n, d]` matrix.
    pub fn sum_rows(&mut self, a: Var) -> Result<Var> {
        let ta = self.value(a);
        let (n, d) = match ta.shape() {
            [n, d] => (*n, *d),
            s => return Err(dim_err("sum_rows", format!("{s:?}"))),
        };
        let mut out = vec![0.0; d];
        for i in 0..n {
            for (o, x) in out.iter_mut().zip(ta.row(i)) {
                *o += x;
            }
        }
        self.push(Op::SumRows(a), Tensor::vector(out))
    }

    /// Mean over the rows whose mask entry is `true`; zeros if none are.
    pub fn mean_rows(&mut self, a: Var, mask: Vec<bool>) -> Result<Var> {
        let ta = self.value(a);
        let (n, d) = match ta.shape() {
            [n, d] => (*n, *d),
            s => return Err(dim_err("mean_rows", format!("{s:?}"))),
        };
        if mask.len() != n {
            return Err(dim_err("mean_rows", format!("mask length {} vs {n}", mask.len())));
        }
        let count = mask.iter().filter(|m| **m).count();
        let mut out = vec![0.0; d];
        if count > 0 {
            for i in (0..n).filter(|i| mask[*i]) {
                for (o, x) in out.iter_mut().zip(ta.row(i)) {
                    *o += x;
                }
            }
            let inv = 1.0 / count as f64;
            out.iter_mut().for_each(|o| *o *= inv);
        }
        self.push(Op::MeanRows { x: a, mask }, Tensor::vector(out))
    }

    pub fn dot(&mut self, a: Var, b: Var) -> Result<Var> {
        let (ta, tb) = (self.value(a), self.value(b));
        if ta.rank() != 1 || ta.shape() != tb.shape() {
            return Err(dim_err("dot", format!("{:?} . {:?}", ta.shape(), tb.shape())));
        }
        let s = ta.data().iter().zip(tb.data()).map(|(x, y)| x * y).sum();
        self.push(Op::Dot(a, b), Tensor::scalar(s))
    }

    /// Concatenates vectors end to end.
    pub fn concat(&mut self, parts: &[Var]) -> Result<Var> {
        let mut out = Vec::new();
        for p in parts {
            let t = self.value(*p);
            if t.rank() != 1 {
                return Err(dim_err("concat", format!("part of shape {:?}", t.shape())));
            }
            out.extend_from_slice(t.data());
        }
        self.push(Op::Concat(parts.to_vec()), Tensor::vector(out))
    }

    /// Stacks equal-length vectors as the rows of a matrix.
    pub fn stack(&mut self, rows: &[Var]) -> Result<Var> {
        if rows.is_empty() {
            return Err(dim_err("stack", "no rows"));
        }
        let d = self.shape(rows[0]).to_vec();
        if d.len() != 1 {
            return Err(dim_err("stack", format!("row of shape {d:?}")));
        }
        let mut out = Vec::with_capacity(rows.len() * d[0]);
        for r in rows {
            let t = self.value(*r);
            if t.shape() != d.as_slice() {
                return Err(dim_err("stack", format!("{:?} vs {d:?}", t.shape())));
            }
            out.extend_from_slice(t.data());
        }
        let out = Tensor::matrix(rows.len(), d[0], out)?;
        self.push(Op::Stack(rows.to_vec()), out)
    }

    /// Joins `[n, d_i]` matrices side by side into `[n, Σ d_i]`.
    pub fn concat_cols(&mut self, parts: &[Var]) -> Result<Var> {
        if parts.is_empty() {
            return Err(dim_err("concat_cols", "no parts"));
        }
        let n = match self.shape(parts[0]) {
            [n, _] => *n,
            s => return Err(dim_err("concat_cols", format!("{s:?}"))),
        };
        let mut widths = Vec::with_capacity(parts.len());
        for p in parts {
            match self.shape(*p) {
                [r, c] if *r == n => widths.push(*c),
                s => return Err(dim_err("concat_cols", format!("{s:?} with {n} rows"))),
            }
        }
        let total: usize = widths.iter().sum();
        let mut out = vec![0.0; n * total];
        let mut offset = 0;
        for (p, w) in parts.iter().zip(&widths) {
            let t = self.value(*p);
            for i in 0..n {
                out[i * total + offset..i * total + offset + w].copy_from_slice(t.row(i));
            }
            offset += w;
        }
        let out = Tensor::matrix(n, total, out)?;
        self.push(Op::ConcatCols(parts.to_vec()), out)
    }

    /// Rows `ids` of a `[V, d]` table.
    pub fn gather(&mut self, table: Var, ids: &[usize]) -> Result<Var> {
        let tt = self.value(table);
        let (v, d) = match tt.shape() {
            [v, d] => (*v, *d),
            s => return Err(dim_err("gather", format!("table {s:?}"))),
        };
        let mut out = Vec::with_capacity(ids.len() * d);
        for &id in ids {
            if id >= v {
                return Err(dim_err("gather", format!("row {id} out of {v}")));
            }
            out.extend_from_slice(tt.row(id));
        }
        let out = Tensor::matrix(ids.len(), d, out)?;
        self.push(
            Op::Gather {
                table,
                ids: ids.to_vec(),
            },
            out,
        )
    }

    /// Same data under a new shape with the same element count.
    pub fn reshape(&mut self, a: Var, shape: &[usize]) -> Result<Var> {
        let ta = self.value(a);
        let out = Tensor::new(shape.to_vec(), ta.data().to_vec())
            .map_err(|_| dim_err("reshape", format!("{:?} to {shape:?}", ta.shape())))?;
        self.push(Op::Reshape(a), out)
    }

    /// Same-length 1-D convolution followed by ReLU.
    ///
    /// `x` is `[M, D_in]`, `kernel` is `[N_f, 2K+1, D_in]`, `bias` is `[N_f]`.
    /// The input is zero-padded by `K` on both ends so the output is `[M, N_f]`.
    pub fn conv1d_relu(&mut self, x: Var, kernel: Var, bias: Var) -> Result<Var> {
        let (tx, tk, tb) = (self.value(x), self.value(kernel), self.value(bias));
        let (m, din) = match tx.shape() {
            [m, d] if *m >= 1 => (*m, *d),
            s => return Err(dim_err("conv1d", format!("input {s:?}"))),
        };
        let (nf, width) = match tk.shape() {
            [nf, w, d] if *d == din && w % 2 == 1 => (*nf, *w),
            s => return Err(dim_err("conv1d", format!("kernel {s:?} for input width {din}"))),
        };
        if tb.shape() != [nf] {
            return Err(dim_err("conv1d", format!("bias {:?}, expected [{nf}]", tb.shape())));
        }
        if !tx.is_finite() {
            return Err(Error::Numeric("conv1d: non-finite input".into()));
        }
        let half = width / 2;
        let (xd, kd, bd) = (tx.data(), tk.data(), tb.data());
        let mut out = vec![0.0; m * nf];
        for i in 0..m {
            for f in 0..nf {
                let mut acc = bd[f];
                for t in 0..width {
                    let Some(src) = (i + t).checked_sub(half).filter(|s| *s < m) else {
                        continue;
                    };
                    let xr = &xd[src * din..(src + 1) * din];
                    let kr = &kd[(f * width + t) * din..(f * width + t + 1) * din];
                    for d in 0..din {
                        acc += kr[d] * xr[d];
                    }
                }
                out[i * nf + f] = acc.max(0.0);
            }
        }
        let out = Tensor::matrix(m, nf, out)?;
        self.push(Op::Conv1dRelu { x, kernel, bias }, out)
    }

    /// Summed negative log-likelihood of probabilities `rho` against 0/1
    /// labels, with `rho` clamped to `[1e-12, 1 - 1e-12]`.
    pub fn nll(&mut self, rho: Var, labels: &[f64]) -> Result<Var> {
        let tr = self.value(rho);
        if tr.shape() != [labels.len()] {
            return Err(dim_err("nll", format!("{:?} vs {} labels", tr.shape(), labels.len())));
        }
        let loss = nll_value(tr.data(), labels);
        self.push(
            Op::Nll {
                rho,
                labels: labels.to_vec(),
            },
            Tensor::scalar(loss),
        )
    }

    /// Reverse sweep from a scalar `loss`.
    ///
    /// A graph can be differentiated once; build a fresh graph for the next
    /// forward pass.
    pub fn backward(&mut self, loss: Var) -> Result<Gradients> {
        if self.backward_done {
            return Err(Error::Contract(
                "backward called twice on the same forward pass".into(),
            ));
        }
        if self.value(loss).numel() != 1 {
            return Err(Error::Contract(format!(
                "backward on non-scalar of shape {:?}",
                self.shape(loss)
            )));
        }
        self.backward_done = true;

        let mut grads: Vec<Option<Vec<f64>>> = (0..self.nodes.len()).map(|_| None).collect();
        grads[loss.0] = Some(vec![1.0]);

        for i in (0..=loss.0).rev() {
            if !self.nodes[i].needs_grad {
                continue;
            }
            let Some(g) = grads[i].take() else { continue };
            self.backprop_node(i, &g, &mut grads)?;
            if matches!(self.nodes[i].op, Op::Leaf) {
                grads[i] = Some(g);
            }
        }

        let mut out = Gradients::default();
        for (i, node) in self.nodes.iter().enumerate() {
            if !node.needs_grad || !matches!(node.op, Op::Leaf) {
                continue;
            }
            let shape = self.value(Var(i)).shape().to_vec();
            let g = grads[i].take().unwrap_or_else(|| vec![0.0; shape.iter().product()]);
            if g.iter().any(|v| !v.is_finite()) {
                return Err(Error::Numeric("non-finite gradient".into()));
            }
            let t = Tensor::new(shape, g)?;
            match node.value {
                Value::Param(id) => {
                    out.params.insert(id, t);
                }
                Value::Owned(_) => {
                    out.leaves.insert(Var(i), t);
                }
            }
        }
        Ok(out)
    }

    fn backprop_node(&self, i: usize, g: &[f64], grads: &mut [Option<Vec<f64>>]) -> Result<()> {
        let out = self.value(Var(i));
        match &self.nodes[i].op {
            Op::Leaf => {}
            Op::Add(a, b) => {
                for v in [a, b] {
                    if self.needs(*v) {
                        axpy(self.acc(grads, *v), 1.0, g);
                    }
                }
            }
            Op::Mul(a, b) => {
                if self.needs(*a) {
                    let bd = self.value(*b).data();
                    let ga = self.acc(grads, *a);
                    for k in 0..g.len() {
                        ga[k] += g[k] * bd[k];
                    }
                }
                if self.needs(*b) {
                    let ad = self.value(*a).data();
                    let gb = self.acc(grads, *b);
                    for k in 0..g.len() {
                        gb[k] += g[k] * ad[k];
                    }
                }
            }
            Op::Scale(a, c) => {
                if self.needs(*a) {
                    axpy(self.acc(grads, *a), *c, g);
                }
            }
            Op::Tanh(a) => {
                if self.needs(*a) {
                    let y = out.data();
                    let ga = self.acc(grads, *a);
                    for k in 0..g.len() {
                        ga[k] += g[k] * (1.0 - y[k] * y[k]);
                    }
                }
            }
            Op::Sigmoid(a) => {
                if self.needs(*a) {
                    let y = out.data();
                    let ga = self.acc(grads, *a);
                    for k in 0..g.len() {
                        ga[k] += g[k] * y[k] * (1.0 - y[k]);
                    }
                }
            }
            Op::Relu(a) => {
                if self.needs(*a) {
                    let y = out.data();
                    let ga = self.acc(grads, *a);
                    for k in 0..g.len() {
                        if y[k] > 0.0 {
                            ga[k] += g[k];
                        }
                    }
                }
            }
            Op::Linear { x, w, b } => {
                let (tx, tw) = (self.value(*x), self.value(*w));
                let (o, a) = (tw.shape()[0], tw.shape()[1]);
                let rows = tx.numel() / a;
                let (xd, wd) = (tx.data(), tw.data());
                if self.needs(*x) {
                    let gx = self.acc(grads, *x);
                    for r in 0..rows {
                        for j in 0..o {
                            let gj = g[r * o + j];
                            if gj == 0.0 {
                                continue;
                            }
                            let wr = &wd[j * a..(j + 1) * a];
                            let gxr = &mut gx[r * a..(r + 1) * a];
                            for k in 0..a {
                                gxr[k] += gj * wr[k];
                            }
                        }
                    }
                }
                if self.needs(*w) {
                    let gw = self.acc(grads, *w);
                    for r in 0..rows {
                        let xr = &xd[r * a..(r + 1) * a];
                        for j in 0..o {
                            let gj = g[r * o + j];
                            if gj == 0.0 {
                                continue;
                            }
                            let gwr = &mut gw[j * a..(j + 1) * a];
                            for k in 0..a {
                                gwr[k] += gj * xr[k];
                            }
                        }
                    }
                }
                if let Some(b) = b {
                    if self.needs(*b) {
                        let gb = self.acc(grads, *b);
                        for r in 0..rows {
                            for j in 0..o {
                                gb[j] += g[r * o + j];
                            }
                        }
                    }
                }
            }
            Op::MatMul(a, b) => {
                let (ta, tb) = (self.value(*a), self.value(*b));
                let (n, k) = (ta.shape()[0], ta.shape()[1]);
                let m = tb.shape()[1];
                if self.needs(*a) {
                    let bd = tb.data();
                    let ga = self.acc(grads, *a);
                    for i in 0..n {
                        for p in 0..k {
                            let mut s = 0.0;
                            for j in 0..m {
                                s += g[i * m + j] * bd[p * m + j];
                            }
                            ga[i * k + p] += s;
                        }
                    }
                }
                if self.needs(*b) {
                    let ad = ta.data();
                    let gb = self.acc(grads, *b);
                    for i in 0..n {
                        for p in 0..k {
                            let aip = ad[i * k + p];
                            for j in 0..m {
                                gb[p * m + j] += aip * g[i * m + j];
                            }
                        }
                    }
                }
            }
            Op::Transpose(a) => {
                if self.needs(*a) {
                    let (n, m) = (self.shape(*a)[0], self.shape(*a)[1]);
                    let ga = self.acc(grads, *a);
                    for i in 0..n {
                        for j in 0..m {
                            ga[i * m + j] += g[j * n + i];
                        }
                    }
                }
            }
            Op::MatVec(rows, v) => {
                let (tr, tv) = (self.value(*rows), self.value(*v));
                let d = tv.numel();
                let n = g.len();
                if self.needs(*rows) {
                    let vd = tv.data();
                    let gr = self.acc(grads, *rows);
                    for i in 0..n {
                        for j in 0..d {
                            gr[i * d + j] += g[i] * vd[j];
                        }
                    }
                }
                if self.needs(*v) {
                    let rd = tr.data();
                    let gv = self.acc(grads, *v);
                    for i in 0..n {
                        for j in 0..d {
                            gv[j] += g[i] * rd[i * d + j];
                        }
                    }
                }
            }
            Op::WeightedSum(weights, rows) => {
                let (tw, tr) = (self.value(*weights), self.value(*rows));
                let n = tw.numel();
                let d = g.len();
                if self.needs(*weights) {
                    let rd = tr.data();
                    let gw = self.acc(grads, *weights);
                    for i in 0..n {
                        gw[i] += (0..d).map(|j| g[j] * rd[i * d + j]).sum::<f64>();
                    }
                }
                if self.needs(*rows) {
                    let wd = tw.data();
                    let gr = self.acc(grads, *rows);
                    for i in 0..n {
                        for j in 0..d {
                            gr[i * d + j] += wd[i] * g[j];
                        }
                    }
                }
            }
            Op::Softmax { x, mask } => {
                if self.needs(*x) {
                    let y = out.data();
                    let cols = match out.shape() {
                        [] => 1,
                        [c] => *c,
                        [_, c] => *c,
                        _ => unreachable!(),
                    };
                    let gx = self.acc(grads, *x);
                    for r in 0..y.len() / cols {
                        let yr = &y[r * cols..(r + 1) * cols];
                        let gr = &g[r * cols..(r + 1) * cols];
                        let inner: f64 = yr.iter().zip(gr).map(|(a, b)| a * b).sum();
                        for c in 0..cols {
                            if mask.as_ref().is_some_and(|m| !m[c]) {
                                continue;
                            }
                            gx[r * cols + c] += yr[c] * (gr[c] - inner);
                        }
                    }
                }
            }
            Op::Sum(a) => {
                if self.needs(*a) {
                    let ga = self.acc(grads, *a);
                    ga.iter_mut().for_each(|v| *v += g[0]);
                }
            }
            Op::SumRows(a) => {
                if self.needs(*a) {
                    let d = g.len();
                    let ga = self.acc(grads, *a);
                    for (k, v) in ga.iter_mut().enumerate() {
                        *v += g[k % d];
                    }
                }
            }
            Op::MeanRows { x, mask } => {
                if self.needs(*x) {
                    let count = mask.iter().filter(|m| **m).count();
                    if count > 0 {
                        let d = g.len();
                        let inv = 1.0 / count as f64;
                        let gx = self.acc(grads, *x);
                        for (i, _) in mask.iter().enumerate().filter(|(_, m)| **m) {
                            for j in 0..d {
                                gx[i * d + j] += g[j] * inv;
                            }
                        }
                    }
                }
            }
            Op::Dot(a, b) => {
                if self.needs(*a) {
                    let bd = self.value(*b).data();
                    axpy(self.acc(grads, *a), g[0], &bd);
                }
                if self.needs(*b) {
                    let ad = self.value(*a).data();
                    axpy(self.acc(grads, *b), g[0], &ad);
                }
            }
            Op::Concat(parts) | Op::Stack(parts) => {
                let mut offset = 0;
                for p in parts {
                    let len = self.value(*p).numel();
                    if self.needs(*p) {
                        axpy(self.acc(grads, *p), 1.0, &g[offset..offset + len]);
                    }
                    offset += len;
                }
            }
            Op::ConcatCols(parts) => {
                let total = out.shape()[1];
                let n = out.shape()[0];
                let mut offset = 0;
                for p in parts {
                    let w = self.shape(*p)[1];
                    if self.needs(*p) {
                        let gp = self.acc(grads, *p);
                        for i in 0..n {
                            for c in 0..w {
                                gp[i * w + c] += g[i * total + offset + c];
                            }
                        }
                    }
                    offset += w;
                }
            }
            Op::Gather { table, ids } => {
                if self.needs(*table) {
                    let d = self.shape(*table)[1];
                    let gt = self.acc(grads, *table);
                    for (r, &id) in ids.iter().enumerate() {
                        for j in 0..d {
                            gt[id * d + j] += g[r * d + j];
                        }
                    }
                }
            }
            Op::Reshape(a) => {
                if self.needs(*a) {
                    axpy(self.acc(grads, *a), 1.0, g);
                }
            }
            Op::Conv1dRelu { x, kernel, bias } => {
                let (tx, tk) = (self.value(*x), self.value(*kernel));
                let (m, din) = (tx.shape()[0], tx.shape()[1]);
                let (nf, width) = (tk.shape()[0], tk.shape()[1]);
                let half = width / 2;
                let y = out.data();
                // Gradient at the pre-activation, zero where ReLU clipped.
                let gz: Vec<f64> = (0..m * nf)
                    .map(|k| if y[k] > 0.0 { g[k] } else { 0.0 })
                    .collect();
                if self.needs(*bias) {
                    let gb = self.acc(grads, *bias);
                    for i in 0..m {
                        for f in 0..nf {
                            gb[f] += gz[i * nf + f];
                        }
                    }
                }
                let taps = |i: usize, t: usize| (i + t).checked_sub(half).filter(|s| *s < m);
                if self.needs(*kernel) {
                    let xd = tx.data();
                    let gk = self.acc(grads, *kernel);
                    for i in 0..m {
                        for f in 0..nf {
                            let gzf = gz[i * nf + f];
                            if gzf == 0.0 {
                                continue;
                            }
                            for t in 0..width {
                                let Some(src) = taps(i, t) else { continue };
                                let base = (f * width + t) * din;
                                for d in 0..din {
                                    gk[base + d] += gzf * xd[src * din + d];
                                }
                            }
                        }
                    }
                }
                if self.needs(*x) {
                    let kd = tk.data();
                    let gx = self.acc(grads, *x);
                    for i in 0..m {
                        for f in 0..nf {
                            let gzf = gz[i * nf + f];
                            if gzf == 0.0 {
                                continue;
                            }
                            for t in 0..width {
                                let Some(src) = taps(i, t) else { continue };
                                let base = (f * width + t) * din;
                                for d in 0..din {
                                    gx[src * din + d] += gzf * kd[base + d];
                                }
                            }
                        }
                    }
                }
            }
            Op::Nll { rho, labels } => {
                if self.needs(*rho) {
                    let rd = self.value(*rho).data();
                    let gr = self.acc(grads, *rho);
                    for k in 0..rd.len() {
                        let p = rd[k];
                        if p <= NLL_CLAMP || p >= 1.0 - NLL_CLAMP {
                            continue;
                        }
                        let y = labels[k];
                        gr[k] += g[0] * (-y / p + (1.0 - y) / (1.0 - p));
                    }
                }
            }
        }
        Ok(())
    }

    fn acc<'g>(&self, grads: &'g mut [Option<Vec<f64>>], v: Var) -> &'g mut Vec<f64> {
        let len = self.value(v).numel();
        grads[v.0].get_or_insert_with(|| vec![0.0; len])
    }
}

fn axpy(dst: &mut [f64], alpha: f64, src: &[f64]) {
    for (d, s) in dst.iter_mut().zip(src) {
        *d += alpha * s;
    }
}

pub fn sigmoid(x: f64) -> f64 {
    if x >= 0.0 {
        1.0 / (1.0 + (-x).exp())
    } else {
        let e = x.exp();
        e / (1.0 + e)
    }
}

/// Max-subtracted softmax of one row into `out`.
pub(crate) fn softmax_row(row: &[f64], mask: Option<&[bool]>, out: &mut [f64]) {
    let active = |c: usize| mask.is_none_or(|m| m[c]);
    let max = (0..row.len())
        .filter(|c| active(*c))
        .map(|c| row[c])
        .fold(f64::NEG_INFINITY, f64::max);
    if max == f64::NEG_INFINITY {
        out.iter_mut().for_each(|o| *o = 0.0);
        return;
    }
    let mut z = 0.0;
    for c in 0..row.len() {
        out[c] = if active(c) { (row[c] - max).exp() } else { 0.0 };
        z += out[c];
    }
    out.iter_mut().for_each(|o| *o /= z);
}

pub(crate) fn nll_value(rho: &[f64], labels: &[f64]) -> f64 {
    -rho.iter()
        .zip(labels)
        .map(|(&p, &y)| {
            let p = p.clamp(NLL_CLAMP, 1.0 - NLL_CLAMP);
            y * p.ln() + (1.0 - y) * (1.0 - p).ln()
        })
        .sum::<f64>()
}

#[cfg(test)]
mod tests {
    use super::*;
    use crate::autograd::finite_diff_check;
    use rand::{Rng, SeedableRng};
    use rand_chacha::ChaCha8Rng;

    fn store() -> ParamStore {
        ParamStore::new()
    }

    fn random(rng: &mut ChaCha8Rng, shape: &[usize]) -> Tensor {
        let n = shape.iter().product();
        Tensor::new(shape.to_vec(), (0..n).map(|_| rng.gen_range(-1.0..1.0)).collect()).unwrap()
    }

    #[test]
    fn conv_hand_example() {
        let s = store();
        let mut g = Graph::new(&s);
        let x = g.constant(Tensor::matrix(3, 1, vec![1.0, 2.0, 3.0]).unwrap()).unwrap();
        let k = g.constant(Tensor::new(vec![1, 3, 1], vec![1.0; 3]).unwrap()).unwrap();
        let b = g.constant(Tensor::vector(vec![0.0])).unwrap();
        let y = g.conv1d_relu(x, k, b).unwrap();
        assert_eq!(g.value(y).data(), [3.0, 6.0, 5.0]);
    }

    #[test]
    fn conv_zero_kernel_and_identity_kernel() {
        let s = store();
        let mut rng = ChaCha8Rng::seed_from_u64(3);
        let mut g = Graph::new(&s);
        let xt = random(&mut rng, &[5, 2]);
        let x = g.constant(xt.clone()).unwrap();
        let zero = g.zeros(&[4, 3, 2]).unwrap();
        let b = g.zeros(&[4]).unwrap();
        let y = g.conv1d_relu(x, zero, b).unwrap();
        assert!(g.value(y).data().iter().all(|v| *v == 0.0));

        // Centre tap passes channel c through to filter c.
        let mut id = Tensor::zeros(&[2, 3, 2]);
        id.data_mut()[(0 * 3 + 1) * 2] = 1.0;
        id.data_mut()[(1 * 3 + 1) * 2 + 1] = 1.0;
        let k = g.constant(id).unwrap();
        let b = g.zeros(&[2]).unwrap();
        let y = g.conv1d_relu(x, k, b).unwrap();
        let relu: Vec<f64> = xt.data().iter().map(|v| v.max(0.0)).collect();
        assert_eq!(g.value(y).data(), relu.as_slice());
    }

    #[test]
    fn conv_rejects_bad_shapes() {
        let s = store();
        let mut g = Graph::new(&s);
        let x = g.zeros(&[3, 2]).unwrap();
        let even = g.zeros(&[1, 2, 2]).unwrap();
        let b = g.zeros(&[1]).unwrap();
        assert!(matches!(g.conv1d_relu(x, even, b), Err(Error::Dimension(_))));
        let k = g.zeros(&[1, 3, 4]).unwrap();
        assert!(matches!(g.conv1d_relu(x, k, b), Err(Error::Dimension(_))));
    }

    #[test]
    fn softmax_examples() {
        let s = store();
        let mut g = Graph::new(&s);
        let x = g.constant(Tensor::vector(vec![7.5; 4])).unwrap();
        let y = g.softmax(x, None).unwrap();
        assert_eq!(g.value(y).data(), [0.25; 4]);
        let x = g.constant(Tensor::vector(vec![-3.0])).unwrap();
        let y = g.softmax(x, None).unwrap();
        assert_eq!(g.value(y).data(), [1.0]);
        let x = g.constant(Tensor::vector(vec![0.0, 3f64.ln()])).unwrap();
        let y = g.softmax(x, None).unwrap();
        let d = g.value(y).data();
        assert!((d[0] - 0.25).abs() < 1e-15 && (d[1] - 0.75).abs() < 1e-15);
        let e = g.constant(Tensor::vector(vec![])).unwrap();
        assert!(matches!(g.softmax(e, None), Err(Error::Dimension(_))));
    }

    #[test]
    fn softmax_mask_zeroes_positions() {
        let s = store();
        let mut g = Graph::new(&s);
        let x = g.constant(Tensor::vector(vec![1.0, 50.0, 2.0])).unwrap();
        let y = g.softmax(x, Some(vec![true, false, true])).unwrap();
        let d = g.value(y).data();
        assert_eq!(d[1], 0.0);
        assert!((d[0] + d[2] - 1.0).abs() < 1e-15);
        let y = g.softmax(x, Some(vec![false; 3])).unwrap();
        assert_eq!(g.value(y).data(), [0.0; 3]);
    }

    #[test]
    fn backward_examples() {
        let s = store();
        let mut g = Graph::new(&s);
        let x = g.leaf(Tensor::vector(vec![0.3, -1.0, 2.0])).unwrap();
        let l = g.sum(x).unwrap();
        assert_eq!(g.backward(l).unwrap().wrt(x).unwrap().data(), [1.0; 3]);

        let mut g = Graph::new(&s);
        let x = g.leaf(Tensor::vector(vec![1.0, 2.0])).unwrap();
        let l = g.dot(x, x).unwrap();
        assert_eq!(g.backward(l).unwrap().wrt(x).unwrap().data(), [2.0, 4.0]);
    }

    #[test]
    fn unreached_leaf_gets_zeros() {
        let s = store();
        let mut g = Graph::new(&s);
        let x = g.leaf(Tensor::vector(vec![1.0, 2.0])).unwrap();
        let unused = g.leaf(Tensor::vector(vec![5.0])).unwrap();
        let l = g.sum(x).unwrap();
        assert_eq!(g.backward(l).unwrap().wrt(unused).unwrap().data(), [0.0]);
    }

    #[test]
    fn backward_contract_errors() {
        let s = store();
        let mut g = Graph::new(&s);
        let x = g.leaf(Tensor::vector(vec![1.0, 2.0])).unwrap();
        assert!(matches!(g.backward(x), Err(Error::Contract(_))));
        let l = g.sum(x).unwrap();
        g.backward(l).unwrap();
        assert!(matches!(g.backward(l), Err(Error::Contract(_))));
    }

    #[test]
    fn non_finite_is_a_numeric_error() {
        let s = store();
        let mut g = Graph::new(&s);
        assert!(matches!(g.constant(Tensor::vector(vec![f64::NAN])), Err(Error::Numeric(_))));
        let x = g.constant(Tensor::vector(vec![1e300])).unwrap();
        assert!(matches!(g.mul(x, x), Err(Error::Numeric(_))));
    }

    #[test]
    fn params_share_one_leaf_and_frozen_graphs_skip_them() {
        let mut s = store();
        let id = s.add("w", Tensor::vector(vec![1.0, -2.0])).unwrap();
        let mut g = Graph::new(&s);
        let (a, b) = (g.param(id), g.param(id));
        assert_eq!(a, b);
        let l = g.dot(a, b).unwrap();
        assert_eq!(g.backward(l).unwrap().param(id).unwrap().data(), [2.0, -4.0]);

        let mut g = Graph::frozen(&s);
        let w = g.param(id);
        let l = g.sum(w).unwrap();
        assert!(g.backward(l).unwrap().param(id).is_none());
    }

    #[test]
    fn gather_accumulates_repeated_rows() {
        let mut s = store();
        let id = s.add("t", Tensor::matrix(3, 2, vec![0.0, 0.0, 1.0, 2.0, 3.0, 4.0]).unwrap()).unwrap();
        let mut g = Graph::new(&s);
        let t = g.param(id);
        let rows = g.gather(t, &[2, 1, 2]).unwrap();
        assert_eq!(g.value(rows).data(), [3.0, 4.0, 1.0, 2.0, 3.0, 4.0]);
        let l = g.sum(rows).unwrap();
        assert_eq!(g.backward(l).unwrap().param(id).unwrap().data(), [0.0, 0.0, 1.0, 1.0, 2.0, 2.0]);
        let mut g = Graph::new(&s);
        let t = g.param(id);
        assert!(g.gather(t, &[3]).is_err());
    }

    #[test]
    fn nll_examples() {
        let s = store();
        let mut g = Graph::new(&s);
        let rho = g.constant(Tensor::vector(vec![0.5, 0.5])).unwrap();
        let l = g.nll(rho, &[1.0, 0.0]).unwrap();
        assert!((g.value(l).item().unwrap() - 2.0 * 2f64.ln()).abs() < 1e-15);
        let rho = g.constant(Tensor::vector(vec![0.0, 1.0])).unwrap();
        let l = g.nll(rho, &[1.0, 0.0]).unwrap();
        assert!(g.value(l).item().unwrap().is_finite());
    }

    // Each op checked against central differences through a scalar reduction.
    #[test]
    fn ops_match_finite_differences() {
        type Op = fn(&mut Graph<'_>, Var) -> Result<Var>;
        let cases: Vec<(&str, Vec<usize>, Op)> = vec![
            ("tanh", vec![5], |g, x| {
                let y = g.tanh(x)?;
                g.sum(y)
            }),
            ("sigmoid_dot", vec![4], |g, x| {
                let d = g.dot(x, x)?;
                let y = g.sigmoid(d)?;
                g.sum(y)
            }),
            ("softmax_mul", vec![5], |g, x| {
                let s = g.softmax(x, Some(vec![true, true, false, true, true]))?;
                let y = g.mul(s, x)?;
                g.sum(y)
            }),
            ("matrix_softmax", vec![3, 4], |g, x| {
                let s = g.softmax(x, None)?;
                let t = g.tanh(x)?;
                let y = g.mul(s, t)?;
                g.sum(y)
            }),
            ("linear", vec![3, 4], |g, x| {
                let w = g.scale(x, 0.5)?;
                let w = g.transpose(w)?;
                let y = g.matmul(x, w)?;
                let y = g.tanh(y)?;
                g.sum(y)
            }),
            ("linear_bias", vec![2, 3], |g, x| {
                let b = g.constant(Tensor::vector(vec![0.1, -0.2]))?;
                let y = g.linear(x, x, Some(b))?;
                let y = g.tanh(y)?;
                g.sum(y)
            }),
            ("matvec_weighted", vec![3, 3], |g, x| {
                let v = g.sum_rows(x)?;
                let s = g.matvec(x, v)?;
                let a = g.softmax(s, None)?;
                let y = g.weighted_sum(a, x)?;
                let y = g.tanh(y)?;
                g.sum(y)
            }),
            ("stack_concat", vec![2, 3], |g, x| {
                let m = g.mean_rows(x, vec![true, false])?;
                let s = g.sum_rows(x)?;
                let st = g.stack(&[m, s])?;
                let cc = g.concat_cols(&[st, x])?;
                let r = g.reshape(cc, &[12])?;
                let c = g.concat(&[r, m])?;
                let y = g.mul(c, c)?;
                g.sum(y)
            }),
            ("gather", vec![4, 2], |g, x| {
                let r = g.gather(x, &[3, 0, 3])?;
                let y = g.tanh(r)?;
                let y = g.mul(y, r)?;
                g.sum(y)
            }),
            ("nll", vec![3], |g, x| {
                let p = g.sigmoid(x)?;
                g.nll(p, &[1.0, 0.0, 1.0])
            }),
        ];
        for seed in 0..20 {
            let mut rng = ChaCha8Rng::seed_from_u64(seed);
            for (name, shape, f) in &cases {
                let x = random(&mut rng, shape);
                let err = finite_diff_check(f, &x, 1e-5).unwrap();
                assert!(err < 1e-6, "{name} seed {seed}: {err}");
            }
        }
    }

    #[test]
    fn conv_matches_finite_differences() {
        let mut rng = ChaCha8Rng::seed_from_u64(11);
        let k = random(&mut rng, &[3, 3, 2]);
        let b = Tensor::vector(vec![0.2, -0.1, 0.05]);
        for seed in 0..20 {
            let mut rng = ChaCha8Rng::seed_from_u64(seed);
            let x = random(&mut rng, &[4, 2]);
            let f = |g: &mut Graph<'_>, x: Var| {
                let k = g.constant(k.clone())?;
                let b = g.constant(b.clone())?;
                let y = g.conv1d_relu(x, k, b)?;
                let y = g.mul(y, y)?;
                g.sum(y)
            };
            let err = finite_diff_check(f, &x, 1e-6).unwrap();
            assert!(err < 1e-5, "seed {seed}: {err}");
        }
    }
}
