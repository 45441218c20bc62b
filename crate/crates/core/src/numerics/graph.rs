//! Tape-based reverse-mode differentiation.
//!
//! Nodes are appended in evaluation order, so the tape is already a
//! topological order and `backward` walks it once in reverse.

use std::collections::{BTreeMap, HashMap};

use super::kernels;
use super::params::ParamStore;
use super::tensor::{Real, Tensor};
use crate::error::{Error, Result};

/// Handle to a node recorded on a [`Graph`].
#[derive(Clone, Copy, Debug, PartialEq, Eq, Hash, PartialOrd, Ord)]
pub struct Var(usize);

#[derive(Debug)]
enum Op<T> {
    Leaf,
    MatMul(Var, Var),
    Transpose(Var),
    Add(Var, Var),
    Sub(Var, Var),
    Mul(Var, Var),
    AddRow(Var, Var),
    MulRow(Var, Var),
    Scale(Var, T),
    Exp(Var),
    Tanh(Var),
    Gelu(Var),
    Softmax(Var),
    LogSoftmax(Var),
    LayerNorm {
        x: Var,
        gamma: Var,
        beta: Var,
        xhat: Vec<T>,
        rstd: Vec<T>,
    },
    SliceCols(Var, usize),
    SliceRows(Var, usize),
    ConcatCols(Vec<Var>),
    ConcatRows(Vec<Var>),
    GatherRows(Var, Vec<usize>),
    Reshape(Var),
    ShiftRows(Var, isize),
    MeanRows(Var),
    SumAll(Var),
    MeanAll(Var),
    RoundSt(Var),
    Nll(Var, Vec<(usize, usize)>),
}

#[derive(Debug)]
struct Node<T> {
    value: Tensor<T>,
    op: Op<T>,
    needs_grad: bool,
}

#[derive(Debug)]
pub struct Graph<T: Real = f32> {
    nodes: Vec<Node<T>>,
    params: HashMap<String, Var>,
}

impl<T: Real> Default for Graph<T> {
    fn default() -> Self {
        Self::new()
    }
}

fn col_sums<T: Real>(t: &Tensor<T>) -> Vec<T> {
    let n = t.cols();
    let mut out = vec![T::zero(); n];
    for i in 0..t.rows() {
        for (o, &v) in out.iter_mut().zip(t.row(i)) {
            *o = *o + v;
        }
    }
    out
}

impl<T: Real> Graph<T> {
    pub fn new() -> Self {
        Self {
            nodes: Vec::new(),
            params: HashMap::new(),
        }
    }

    pub fn len(&self) -> usize {
        self.nodes.len()
    }

    pub fn is_empty(&self) -> bool {
        self.nodes.is_empty()
    }

    fn push(&mut self, value: Tensor<T>, op: Op<T>, needs_grad: bool) -> Var {
        self.nodes.push(Node {
            value,
            op,
            needs_grad,
        });
        Var(self.nodes.len() - 1)
    }

    fn ng(&self, v: Var) -> bool {
        self.nodes[v.0].needs_grad
    }

    pub fn value(&self, v: Var) -> &Tensor<T> {
        &self.nodes[v.0].value
    }

    /// Non-differentiable input.
    pub fn constant(&mut self, t: Tensor<T>) -> Var {
        self.push(t, Op::Leaf, false)
    }

    /// Differentiable leaf that is not a named parameter.
    pub fn leaf(&mut self, t: Tensor<T>) -> Var {
        self.push(t, Op::Leaf, true)
    }

    /// Binds a named parameter from `store`; repeated lookups reuse the node.
    pub fn param(&mut self, store: &ParamStore<T>, name: &str) -> Result<Var> {
        if let Some(&v) = self.params.get(name) {
            return Ok(v);
        }
        let t = store
            .get(name)
            .ok_or_else(|| Error::Contract(format!("parameter `{name}` not in store")))?
            .clone();
        let v = self.push(t, Op::Leaf, true);
        self.params.insert(name.to_string(), v);
        Ok(v)
    }

    pub fn param_names(&self) -> impl Iterator<Item = &str> {
        self.params.keys().map(String::as_str)
    }

    fn unary(&mut self, x: Var, value: Tensor<T>, op: Op<T>) -> Var {
        let ng = self.ng(x);
        self.push(value, op, ng)
    }

    fn finite(op: &'static str, t: Tensor<T>) -> Result<Tensor<T>> {
        if t.is_finite() {
            Ok(t)
        } else {
            Err(Error::NonFinite { op })
        }
    }

    pub fn matmul(&mut self, a: Var, b: Var) -> Result<Var> {
        let v = kernels::matmul(self.value(a), self.value(b))?;
        let ng = self.ng(a) || self.ng(b);
        Ok(self.push(v, Op::MatMul(a, b), ng))
    }

    pub fn transpose(&mut self, a: Var) -> Var {
        let v = self.value(a).transpose();
        self.unary(a, v, Op::Transpose(a))
    }

    pub fn add(&mut self, a: Var, b: Var) -> Result<Var> {
        let v = self.value(a).zip_map(self.value(b), |x, y| x + y)?;
        let ng = self.ng(a) || self.ng(b);
        Ok(self.push(v, Op::Add(a, b), ng))
    }

    pub fn sub(&mut self, a: Var, b: Var) -> Result<Var> {
        let v = self.value(a).zip_map(self.value(b), |x, y| x - y)?;
        let ng = self.ng(a) || self.ng(b);
        Ok(self.push(v, Op::Sub(a, b), ng))
    }

    pub fn mul(&mut self, a: Var, b: Var) -> Result<Var> {
        let v = self.value(a).zip_map(self.value(b), |x, y| x * y)?;
        let ng = self.ng(a) || self.ng(b);
        Ok(self.push(v, Op::Mul(a, b), ng))
    }

    fn row_check(&self, op: &'static str, a: Var, row: Var) -> Result<()> {
        let (x, r) = (self.value(a), self.value(row));
        if r.len() != x.cols() || r.rows() != 1 {
            return Err(Error::shape(
                op,
                format!("row {:?} over matrix {:?}", r.dims(), x.dims()),
            ));
        }
        Ok(())
    }

    /// `a + row` with the row broadcast over every row of `a`.
    pub fn add_row(&mut self, a: Var, row: Var) -> Result<Var> {
        self.row_check("add_row", a, row)?;
        let (x, r) = (self.value(a), self.value(row));
        let n = x.cols();
        let data = x
            .data()
            .iter()
            .enumerate()
            .map(|(i, &v)| v + r.data()[i % n])
            .collect();
        let v = Tensor::from_parts(x.dims().to_vec(), data);
        let ng = self.ng(a) || self.ng(row);
        Ok(self.push(v, Op::AddRow(a, row), ng))
    }

    pub fn mul_row(&mut self, a: Var, row: Var) -> Result<Var> {
        self.row_check("mul_row", a, row)?;
        let (x, r) = (self.value(a), self.value(row));
        let n = x.cols();
        let data = x
            .data()
            .iter()
            .enumerate()
            .map(|(i, &v)| v * r.data()[i % n])
            .collect();
        let v = Tensor::from_parts(x.dims().to_vec(), data);
        let ng = self.ng(a) || self.ng(row);
        Ok(self.push(v, Op::MulRow(a, row), ng))
    }

    pub fn scale(&mut self, a: Var, c: f64) -> Var {
        let c = T::of(c);
        let v = self.value(a).map(|x| x * c);
        self.unary(a, v, Op::Scale(a, c))
    }

    pub fn exp(&mut self, a: Var) -> Result<Var> {
        let v = Self::finite("exp", self.value(a).map(T::exp))?;
        Ok(self.unary(a, v, Op::Exp(a)))
    }

    pub fn tanh(&mut self, a: Var) -> Var {
        let v = self.value(a).map(T::tanh);
        self.unary(a, v, Op::Tanh(a))
    }

    /// Tanh-approximation GELU.
    pub fn gelu(&mut self, a: Var) -> Var {
        let v = self.value(a).map(kernels::gelu);
        self.unary(a, v, Op::Gelu(a))
    }

    pub fn softmax_rows(&mut self, a: Var) -> Result<Var> {
        let v = kernels::softmax_rows(self.value(a))?;
        Ok(self.unary(a, v, Op::Softmax(a)))
    }

    /// Causally masked softmax; masked entries are exactly zero.
    pub fn softmax_rows_causal(&mut self, a: Var) -> Result<Var> {
        let v = kernels::softmax_rows_masked(self.value(a), true)?;
        Ok(self.unary(a, v, Op::Softmax(a)))
    }

    pub fn log_softmax_rows(&mut self, a: Var) -> Result<Var> {
        let v = kernels::log_softmax_rows(self.value(a))?;
        Ok(self.unary(a, v, Op::LogSoftmax(a)))
    }

    pub fn layer_norm(&mut self, x: Var, gamma: Var, beta: Var, eps: f64) -> Result<Var> {
        let eps = T::of(eps);
        let y = kernels::layer_norm(self.value(x), self.value(gamma), self.value(beta), eps)?;
        let (xhat, rstd) = kernels::normalize_rows(self.value(x), eps);
        let ng = self.ng(x) || self.ng(gamma) || self.ng(beta);
        Ok(self.push(
            y,
            Op::LayerNorm {
                x,
                gamma,
                beta,
                xhat,
                rstd,
            },
            ng,
        ))
    }

    pub fn slice_cols(&mut self, a: Var, start: usize, len: usize) -> Result<Var> {
        let x = self.value(a);
        let (m, n) = (x.rows(), x.cols());
        if len == 0 || start + len > n {
            return Err(Error::shape(
                "slice_cols",
                format!("cols {start}..{} of {n}", start + len),
            ));
        }
        let mut data = Vec::with_capacity(m * len);
        for i in 0..m {
            data.extend_from_slice(&x.row(i)[start..start + len]);
        }
        let v = Tensor::from_parts(vec![m, len], data);
        Ok(self.unary(a, v, Op::SliceCols(a, start)))
    }

    pub fn slice_rows(&mut self, a: Var, start: usize, len: usize) -> Result<Var> {
        let v = self.value(a).slice_rows(start, len)?;
        Ok(self.unary(a, v, Op::SliceRows(a, start)))
    }

    pub fn concat_cols(&mut self, parts: &[Var]) -> Result<Var> {
        let m = parts
            .first()
            .map(|&p| self.value(p).rows())
            .ok_or_else(|| Error::shape("concat_cols", "no inputs"))?;
        if parts.iter().any(|&p| self.value(p).rows() != m) {
            return Err(Error::shape("concat_cols", "row counts differ"));
        }
        let n: usize = parts.iter().map(|&p| self.value(p).cols()).sum();
        let mut data = Vec::with_capacity(m * n);
        for i in 0..m {
            for &p in parts {
                data.extend_from_slice(self.value(p).row(i));
            }
        }
        let ng = parts.iter().any(|&p| self.ng(p));
        Ok(self.push(
            Tensor::from_parts(vec![m, n], data),
            Op::ConcatCols(parts.to_vec()),
            ng,
        ))
    }

    pub fn concat_rows(&mut self, parts: &[Var]) -> Result<Var> {
        let n = parts
            .first()
            .map(|&p| self.value(p).cols())
            .ok_or_else(|| Error::shape("concat_rows", "no inputs"))?;
        if parts.iter().any(|&p| self.value(p).cols() != n) {
            return Err(Error::shape("concat_rows", "column counts differ"));
        }
        let mut data = Vec::new();
        for &p in parts {
            data.extend_from_slice(self.value(p).data());
        }
        let m = data.len() / n;
        let ng = parts.iter().any(|&p| self.ng(p));
        Ok(self.push(
            Tensor::from_parts(vec![m, n], data),
            Op::ConcatRows(parts.to_vec()),
            ng,
        ))
    }

    /// Row lookup: embedding tables, repetition and broadcasting.
    pub fn gather_rows(&mut self, table: Var, ids: &[usize]) -> Result<Var> {
        let t = self.value(table);
        let (r, n) = (t.rows(), t.cols());
        if ids.is_empty() {
            return Err(Error::shape("gather_rows", "no ids"));
        }
        if let Some(&bad) = ids.iter().find(|&&i| i >= r) {
            return Err(Error::shape(
                "gather_rows",
                format!("id {bad} out of {r} rows"),
            ));
        }
        let mut data = Vec::with_capacity(ids.len() * n);
        for &i in ids {
            data.extend_from_slice(t.row(i));
        }
        let v = Tensor::from_parts(vec![ids.len(), n], data);
        Ok(self.unary(table, v, Op::GatherRows(table, ids.to_vec())))
    }

    /// Row-major reinterpretation; `[4T x d] -> [T x 4d]` stacks frames.
    pub fn reshape(&mut self, a: Var, dims: &[usize]) -> Result<Var> {
        let v = self.value(a).reshape(dims)?;
        Ok(self.unary(a, v, Op::Reshape(a)))
    }

    /// `y[i] = x[i + offset]`, zero outside the input range.
    pub fn shift_rows(&mut self, a: Var, offset: isize) -> Var {
        let x = self.value(a);
        let (m, n) = (x.rows(), x.cols());
        let mut data = vec![T::zero(); m * n];
        for i in 0..m {
            let src = i as isize + offset;
            if src >= 0 && (src as usize) < m {
                data[i * n..(i + 1) * n].copy_from_slice(x.row(src as usize));
            }
        }
        let v = Tensor::from_parts(vec![m, n], data);
        self.unary(a, v, Op::ShiftRows(a, offset))
    }

    pub fn mean_rows(&mut self, a: Var) -> Var {
        let x = self.value(a);
        let m = T::of(x.rows() as f64);
        let data = col_sums(x).into_iter().map(|s| s / m).collect::<Vec<_>>();
        let n = data.len();
        let v = Tensor::from_parts(vec![1, n], data);
        self.unary(a, v, Op::MeanRows(a))
    }

    pub fn sum_all(&mut self, a: Var) -> Var {
        let v = Tensor::scalar(self.value(a).sum());
        self.unary(a, v, Op::SumAll(a))
    }

    pub fn mean_all(&mut self, a: Var) -> Var {
        let v = Tensor::scalar(self.value(a).mean());
        self.unary(a, v, Op::MeanAll(a))
    }

    /// Rounds to the nearest integer; the backward pass treats it as identity.
    pub fn round_st(&mut self, a: Var) -> Var {
        let v = self.value(a).map(T::round);
        self.unary(a, v, Op::RoundSt(a))
    }

    /// Mean negative log-likelihood of the picked `(row, class)` entries of a
    /// log-probability matrix.
    pub fn nll(&mut self, logp: Var, picks: &[(usize, usize)]) -> Result<Var> {
        if picks.is_empty() {
            return Err(Error::Contract("nll over an empty target set".into()));
        }
        let x = self.value(logp);
        if picks.iter().any(|&(r, c)| r >= x.rows() || c >= x.cols()) {
            return Err(Error::shape("nll", "target outside logit matrix"));
        }
        let s: T = picks.iter().map(|&(r, c)| x.get(r, c)).sum();
        let v = Tensor::scalar(-s / T::of(picks.len() as f64));
        Ok(self.unary(logp, v, Op::Nll(logp, picks.to_vec())))
    }

    pub fn square(&mut self, a: Var) -> Result<Var> {
        self.mul(a, a)
    }

    pub fn mse(&mut self, a: Var, b: Var) -> Result<Var> {
        let d = self.sub(a, b)?;
        let sq = self.square(d)?;
        Ok(self.mean_all(sq))
    }

    /// Reverse sweep from a scalar node.
    pub fn backward(&self, loss: Var) -> Result<Gradients<T>> {
        if self.value(loss).len() != 1 {
            return Err(Error::Contract(format!(
                "backward needs a scalar loss, got {:?}",
                self.value(loss).dims()
            )));
        }
        let mut grads: Vec<Option<Tensor<T>>> = (0..self.nodes.len()).map(|_| None).collect();
        grads[loss.0] = Some(Tensor::ones(self.value(loss).dims()));

        for idx in (0..=loss.0).rev() {
            let node = &self.nodes[idx];
            if !node.needs_grad || matches!(node.op, Op::Leaf) {
                continue;
            }
            let Some(g) = grads[idx].take() else { continue };
            self.propagate(node, &g, &mut grads)?;
            grads[idx] = Some(g);
        }

        Ok(Gradients {
            grads,
            params: self.params.clone(),
        })
    }

    fn acc(&self, grads: &mut [Option<Tensor<T>>], v: Var, g: Tensor<T>) {
        if !self.ng(v) {
            return;
        }
        match &mut grads[v.0] {
            Some(existing) => {
                for (e, x) in existing.data_mut().iter_mut().zip(g.data()) {
                    *e = *e + *x;
                }
            }
            slot @ None => *slot = Some(g),
        }
    }

    fn propagate(&self, node: &Node<T>, g: &Tensor<T>, grads: &mut [Option<Tensor<T>>]) -> Result<()> {
        let y = &node.value;
        match &node.op {
            Op::Leaf => {}
            Op::MatMul(a, b) => {
                if self.ng(*a) {
                    let da = kernels::matmul(g, &self.value(*b).transpose())?;
                    self.acc(grads, *a, da);
                }
                if self.ng(*b) {
                    let db = kernels::matmul(&self.value(*a).transpose(), g)?;
                    self.acc(grads, *b, db);
                }
            }
            Op::Transpose(a) => {
                let da = g.transpose().reshape(self.value(*a).dims())?;
                self.acc(grads, *a, da);
            }
            Op::Add(a, b) => {
                self.acc(grads, *a, g.clone());
                self.acc(grads, *b, g.clone());
            }
            Op::Sub(a, b) => {
                self.acc(grads, *a, g.clone());
                self.acc(grads, *b, g.map(|v| -v));
            }
            Op::Mul(a, b) => {
                if self.ng(*a) {
                    self.acc(grads, *a, g.zip_map(self.value(*b), |x, y| x * y)?);
                }
                if self.ng(*b) {
                    self.acc(grads, *b, g.zip_map(self.value(*a), |x, y| x * y)?);
                }
            }
            Op::AddRow(a, row) => {
                self.acc(grads, *a, g.clone());
                if self.ng(*row) {
                    let dr = Tensor::from_parts(self.value(*row).dims().to_vec(), col_sums(g));
                    self.acc(grads, *row, dr);
                }
            }
            Op::MulRow(a, row) => {
                let r = self.value(*row);
                let n = r.len();
                if self.ng(*a) {
                    let data = g
                        .data()
                        .iter()
                        .enumerate()
                        .map(|(i, &v)| v * r.data()[i % n])
                        .collect();
                    self.acc(grads, *a, Tensor::from_parts(g.dims().to_vec(), data));
                }
                if self.ng(*row) {
                    let prod = g.zip_map(self.value(*a), |x, y| x * y)?;
                    self.acc(grads, *row, Tensor::from_parts(r.dims().to_vec(), col_sums(&prod)));
                }
            }
            Op::Scale(a, c) => {
                let c = *c;
                self.acc(grads, *a, g.map(|v| v * c));
            }
            Op::Exp(a) => self.acc(grads, *a, g.zip_map(y, |d, e| d * e)?),
            Op::Tanh(a) => self.acc(grads, *a, g.zip_map(y, |d, t| d * (T::one() - t * t))?),
            Op::Gelu(a) => {
                let x = self.value(*a);
                self.acc(grads, *a, g.zip_map(x, |d, xv| d * kernels::gelu_grad(xv))?);
            }
            Op::Softmax(a) => {
                let (m, n) = (y.rows(), y.cols());
                let mut dx = vec![T::zero(); m * n];
                for i in 0..m {
                    let (yr, gr) = (y.row(i), g.row(i));
                    let dot: T = yr.iter().zip(gr).map(|(&p, &q)| p * q).sum();
                    for j in 0..n {
                        dx[i * n + j] = yr[j] * (gr[j] - dot);
                    }
                }
                self.acc(grads, *a, Tensor::from_parts(y.dims().to_vec(), dx));
            }
            Op::LogSoftmax(a) => {
                let (m, n) = (y.rows(), y.cols());
                let mut dx = vec![T::zero(); m * n];
                for i in 0..m {
                    let (yr, gr) = (y.row(i), g.row(i));
                    let total: T = gr.iter().copied().sum();
                    for j in 0..n {
                        dx[i * n + j] = gr[j] - yr[j].exp() * total;
                    }
                }
                self.acc(grads, *a, Tensor::from_parts(y.dims().to_vec(), dx));
            }
            Op::LayerNorm {
                x,
                gamma,
                beta,
                xhat,
                rstd,
            } => {
                let (m, n) = (y.rows(), y.cols());
                let gm = self.value(*gamma).data();
                if self.ng(*beta) {
                    let db = Tensor::from_parts(self.value(*beta).dims().to_vec(), col_sums(g));
                    self.acc(grads, *beta, db);
                }
                if self.ng(*gamma) {
                    let mut dg = vec![T::zero(); n];
                    for i in 0..m {
                        for j in 0..n {
                            dg[j] = dg[j] + g.data()[i * n + j] * xhat[i * n + j];
                        }
                    }
                    self.acc(grads, *gamma, Tensor::from_parts(self.value(*gamma).dims().to_vec(), dg));
                }
                if self.ng(*x) {
                    let nf = T::of(n as f64);
                    let mut dx = vec![T::zero(); m * n];
                    for i in 0..m {
                        let mut s1 = T::zero();
                        let mut s2 = T::zero();
                        for j in 0..n {
                            let dxh = g.data()[i * n + j] * gm[j];
                            s1 = s1 + dxh;
                            s2 = s2 + dxh * xhat[i * n + j];
                        }
                        for j in 0..n {
                            let dxh = g.data()[i * n + j] * gm[j];
                            dx[i * n + j] = rstd[i] / nf * (nf * dxh - s1 - xhat[i * n + j] * s2);
                        }
                    }
                    self.acc(grads, *x, Tensor::from_parts(vec![m, n], dx));
                }
            }
            Op::SliceCols(a, start) => {
                let x = self.value(*a);
                let (m, n, len) = (x.rows(), x.cols(), g.cols());
                let mut dx = vec![T::zero(); m * n];
                for i in 0..m {
                    dx[i * n + start..i * n + start + len].copy_from_slice(g.row(i));
                }
                self.acc(grads, *a, Tensor::from_parts(x.dims().to_vec(), dx));
            }
            Op::SliceRows(a, start) => {
                let x = self.value(*a);
                let n = x.cols();
                let mut dx = vec![T::zero(); x.len()];
                dx[start * n..start * n + g.len()].copy_from_slice(g.data());
                self.acc(grads, *a, Tensor::from_parts(x.dims().to_vec(), dx));
            }
            Op::ConcatCols(parts) => {
                let m = g.rows();
                let mut off = 0;
                for &p in parts {
                    let c = self.value(p).cols();
                    if self.ng(p) {
                        let mut d = Vec::with_capacity(m * c);
                        for i in 0..m {
                            d.extend_from_slice(&g.row(i)[off..off + c]);
                        }
                        self.acc(grads, p, Tensor::from_parts(self.value(p).dims().to_vec(), d));
                    }
                    off += c;
                }
            }
            Op::ConcatRows(parts) => {
                let mut off = 0;
                for &p in parts {
                    let len = self.value(p).len();
                    if self.ng(p) {
                        let d = g.data()[off..off + len].to_vec();
                        self.acc(grads, p, Tensor::from_parts(self.value(p).dims().to_vec(), d));
                    }
                    off += len;
                }
            }
            Op::GatherRows(table, ids) => {
                let t = self.value(*table);
                let n = t.cols();
                let mut dt = vec![T::zero(); t.len()];
                for (k, &i) in ids.iter().enumerate() {
                    for (d, &v) in dt[i * n..(i + 1) * n].iter_mut().zip(g.row(k)) {
                        *d = *d + v;
                    }
                }
                self.acc(grads, *table, Tensor::from_parts(t.dims().to_vec(), dt));
            }
            Op::Reshape(a) => {
                let d = g.reshape(self.value(*a).dims())?;
                self.acc(grads, *a, d);
            }
            Op::ShiftRows(a, offset) => {
                let (m, n) = (g.rows(), g.cols());
                let mut dx = vec![T::zero(); m * n];
                for i in 0..m {
                    let src = i as isize + offset;
                    if src >= 0 && (src as usize) < m {
                        let s = src as usize;
                        for (d, &v) in dx[s * n..(s + 1) * n].iter_mut().zip(g.row(i)) {
                            *d = *d + v;
                        }
                    }
                }
                self.acc(grads, *a, Tensor::from_parts(self.value(*a).dims().to_vec(), dx));
            }
            Op::MeanRows(a) => {
                let x = self.value(*a);
                let m = x.rows();
                let inv = T::one() / T::of(m as f64);
                let row: Vec<T> = g.data().iter().map(|&v| v * inv).collect();
                let dx = row.repeat(m);
                self.acc(grads, *a, Tensor::from_parts(x.dims().to_vec(), dx));
            }
            Op::SumAll(a) => {
                let x = self.value(*a);
                self.acc(grads, *a, Tensor::full(x.dims(), g.item()));
            }
            Op::MeanAll(a) => {
                let x = self.value(*a);
                let v = g.item() / T::of(x.len() as f64);
                self.acc(grads, *a, Tensor::full(x.dims(), v));
            }
            Op::RoundSt(a) => self.acc(grads, *a, g.clone()),
            Op::Nll(logp, picks) => {
                let x = self.value(*logp);
                let mut dx = Tensor::zeros(x.dims());
                let w = -g.item() / T::of(picks.len() as f64);
                for &(r, c) in picks {
                    let cur = dx.get(r, c);
                    dx.set(r, c, cur + w);
                }
                self.acc(grads, *logp, dx);
            }
        }
        Ok(())
    }
}

/// Result of a backward sweep.
#[derive(Debug)]
pub struct Gradients<T: Real> {
    grads: Vec<Option<Tensor<T>>>,
    params: HashMap<String, Var>,
}

impl<T: Real> Gradients<T> {
    pub fn get(&self, v: Var) -> Option<&Tensor<T>> {
        self.grads.get(v.0).and_then(Option::as_ref)
    }

    /// Gradient of `v`, or zeros shaped like `like` when `v` does not reach
    /// the loss.
    pub fn get_or_zeros(&self, v: Var, like: &Tensor<T>) -> Tensor<T> {
        self.get(v).cloned().unwrap_or_else(|| Tensor::zeros(like.dims()))
    }

    pub fn param(&self, name: &str) -> Option<&Tensor<T>> {
        self.params.get(name).and_then(|&v| self.get(v))
    }

    /// Gradients of every named parameter touched by the graph.
    pub fn named(&self) -> BTreeMap<String, Tensor<T>> {
        self.params
            .iter()
            .filter_map(|(name, &v)| self.get(v).map(|g| (name.clone(), g.clone())))
            .collect()
    }
}

#[cfg(test)]
mod tests {
    use super::*;

    #[test]
    fn square_gradient() {
        let mut g = Graph::<f64>::new();
        let x = g.leaf(Tensor::scalar(3.0));
        let y = g.square(x).unwrap();
        let grads = g.backward(y).unwrap();
        assert_eq!(grads.get(x).unwrap().item(), 6.0);
    }

    #[test]
    fn softmax_sum_is_flat() {
        let mut g = Graph::<f64>::new();
        let x = g.leaf(Tensor::row_vector(vec![0.3, -1.2, 2.0, 0.0]).unwrap());
        let s = g.softmax_rows(x).unwrap();
        let l = g.sum_all(s);
        let grads = g.backward(l).unwrap();
        assert!(grads.get(x).unwrap().data().iter().all(|v| v.abs() < 1e-12));
    }

    #[test]
    fn non_scalar_loss_rejected() {
        let mut g = Graph::<f64>::new();
        let x = g.leaf(Tensor::zeros(&[2, 2]));
        assert!(matches!(g.backward(x), Err(Error::Contract(_))));
    }

    #[test]
    fn constants_get_no_gradient() {
        let mut g = Graph::<f64>::new();
        let c = g.constant(Tensor::full(&[1, 2], 2.0));
        let x = g.leaf(Tensor::full(&[1, 2], 1.5));
        let p = g.mul(c, x).unwrap();
        let l = g.sum_all(p);
        let grads = g.backward(l).unwrap();
        assert!(grads.get(c).is_none());
        assert_eq!(grads.get(x).unwrap().data(), &[2.0, 2.0]);
    }

    #[test]
    fn reused_node_accumulates() {
        let mut g = Graph::<f64>::new();
        let x = g.leaf(Tensor::scalar(2.0));
        let a = g.add(x, x).unwrap();
        let b = g.mul(a, x).unwrap(); // 2x^2
        let grads = g.backward(b).unwrap();
        assert_eq!(grads.get(x).unwrap().item(), 8.0);
    }

    #[test]
    fn round_is_straight_through() {
        let mut g = Graph::<f64>::new();
        let x = g.leaf(Tensor::row_vector(vec![0.49, 0.51, -1.7]).unwrap());
        let r = g.round_st(x);
        assert_eq!(g.value(r).data(), &[0.0, 1.0, -2.0]);
        let l = g.sum_all(r);
        let grads = g.backward(l).unwrap();
        assert_eq!(grads.get(x).unwrap().data(), &[1.0, 1.0, 1.0]);
    }
}
