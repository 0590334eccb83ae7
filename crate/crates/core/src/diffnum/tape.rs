//! Reverse-mode differentiation over a linear tape.
//!
//! Every primitive application appends one node holding its forward value.
//! [`Tape::backward`] walks the nodes once in reverse order, so each node is
//! visited exactly once and leaf gradients accumulate additively.

use alloc::format;
use alloc::vec;
use alloc::vec::Vec;

use super::tensor::{matmul_at_into, matmul_bt_into, matmul_into, Tensor};
use crate::{Error, Result};

/// Handle to a value recorded on a [`Tape`].
#[derive(Debug, Clone, Copy, PartialEq, Eq, PartialOrd, Ord, Hash)]
pub struct Var(usize);

impl Var {
    pub fn index(self) -> usize {
        self.0
    }
}

#[derive(Debug, Clone, Copy, PartialEq, Eq)]
enum Broadcast {
    Same,
    /// Right operand is a length-`cols` row added to every row of the left.
    Row,
}

#[derive(Debug, Clone)]
enum Op {
    Leaf,
    Add(Var, Var, Broadcast),
    Sub(Var, Var, Broadcast),
    Mul(Var, Var, Broadcast),
    Div(Var, Var, Broadcast),
    MatMul(Var, Var),
    Sum(Var),
    Mean(Var),
    Relu(Var),
    Sigmoid(Var),
    Exp(Var),
    Log(Var),
    Abs(Var),
    Pow(Var, f64),
    Scale(Var, f64),
    AddScalar(Var),
    Softmax(Var),
    LogSoftmax(Var),
    ConcatRows(Vec<Var>),
    ConcatCols(Vec<Var>),
    IndexSelect(Var, Vec<usize>),
    ScatterAdd(Var, Vec<usize>),
    Reshape(Var),
}

#[derive(Debug, Clone)]
struct Node {
    value: Tensor,
    op: Op,
    requires_grad: bool,
}

/// Recorded computation. Build one per forward pass.
#[derive(Debug, Default, Clone)]
pub struct Tape {
    nodes: Vec<Node>,
}

/// Gradients produced by [`Tape::backward`], indexed by [`Var`].
#[derive(Debug, Clone)]
pub struct Gradients {
    grads: Vec<Option<Tensor>>,
}

impl Gradients {
    pub fn get(&self, var: Var) -> Option<&Tensor> {
        self.grads.get(var.0).and_then(Option::as_ref)
    }

    /// Gradient of `var`, or zeros shaped like `like` if nothing flowed to it.
    pub fn get_or_zeros(&self, var: Var, like: &Tensor) -> Tensor {
        self.get(var).cloned().unwrap_or_else(|| Tensor::zeros(like.shape()))
    }

    pub fn take(&mut self, var: Var) -> Option<Tensor> {
        self.grads.get_mut(var.0).and_then(Option::take)
    }
}

impl Tape {
    pub fn new() -> Self {
        Tape::default()
    }

    pub fn len(&self) -> usize {
        self.nodes.len()
    }

    pub fn is_empty(&self) -> bool {
        self.nodes.is_empty()
    }

    /// Differentiable input.
    pub fn leaf(&mut self, value: Tensor) -> Var {
        self.push(value, Op::Leaf, true)
    }

    /// Input that receives no gradient.
    pub fn constant(&mut self, value: Tensor) -> Var {
        self.push(value, Op::Leaf, false)
    }

    pub fn value(&self, var: Var) -> &Tensor {
        &self.nodes[var.0].value
    }

    pub fn requires_grad(&self, var: Var) -> bool {
        self.nodes[var.0].requires_grad
    }

    /// Number of differentiable leaves recorded so far.
    pub fn leaf_count(&self) -> usize {
        self.nodes
            .iter()
            .filter(|n| matches!(n.op, Op::Leaf) && n.requires_grad)
            .count()
    }

    fn push(&mut self, value: Tensor, op: Op, requires_grad: bool) -> Var {
        self.nodes.push(Node {
            value,
            op,
            requires_grad,
        });
        Var(self.nodes.len() - 1)
    }

    fn rg(&self, vars: &[Var]) -> bool {
        vars.iter().any(|v| self.nodes[v.0].requires_grad)
    }

    fn broadcast(&self, op: &'static str, a: Var, b: Var) -> Result<Broadcast> {
        let (ta, tb) = (self.value(a), self.value(b));
        if ta.shape() == tb.shape() {
            return Ok(Broadcast::Same);
        }
        let (_, cols) = ta.dims2();
        let row_like = match tb.shape() {
            [n] => *n == cols,
            [1, n] => *n == cols,
            _ => false,
        };
        if ta.rank() == 2 && row_like {
            Ok(Broadcast::Row)
        } else {
            Err(Error::shape(
                op,
                format!("{:?} vs {:?}", ta.shape(), tb.shape()),
            ))
        }
    }

    fn binary(
        &mut self,
        name: &'static str,
        a: Var,
        b: Var,
        f: impl Fn(f64, f64) -> f64,
        make: impl Fn(Var, Var, Broadcast) -> Op,
    ) -> Result<Var> {
        let bc = self.broadcast(name, a, b)?;
        let ta = self.value(a);
        let tb = self.value(b);
        let value = match bc {
            Broadcast::Same => ta.zip(tb, f),
            Broadcast::Row => {
                let (_, cols) = ta.dims2();
                let rhs = tb.data();
                let mut out = ta.clone();
                for (i, x) in out.data_mut().iter_mut().enumerate() {
                    *x = f(*x, rhs[i % cols]);
                }
                out
            }
        };
        let rg = self.rg(&[a, b]);
        Ok(self.push(value, make(a, b, bc), rg))
    }

    fn unary(&mut self, a: Var, value: Tensor, op: Op) -> Var {
        let rg = self.rg(&[a]);
        self.push(value, op, rg)
    }

    pub fn add(&mut self, a: Var, b: Var) -> Result<Var> {
        self.binary("add", a, b, |x, y| x + y, Op::Add)
    }

    pub fn sub(&mut self, a: Var, b: Var) -> Result<Var> {
        self.binary("sub", a, b, |x, y| x - y, Op::Sub)
    }

    pub fn mul(&mut self, a: Var, b: Var) -> Result<Var> {
        self.binary("mul", a, b, |x, y| x * y, Op::Mul)
    }

    pub fn div(&mut self, a: Var, b: Var) -> Result<Var> {
        if self.value(b).data().contains(&0.0) {
            return Err(Error::domain("div", "division by zero"));
        }
        self.binary("div", a, b, |x, y| x / y, Op::Div)
    }

    pub fn matmul(&mut self, a: Var, b: Var) -> Result<Var> {
        let (ta, tb) = (self.value(a), self.value(b));
        if ta.rank() != 2 || tb.rank() != 2 || ta.shape()[1] != tb.shape()[0] {
            return Err(Error::shape(
                "matmul",
                format!("{:?} x {:?}", ta.shape(), tb.shape()),
            ));
        }
        let (m, k, n) = (ta.shape()[0], ta.shape()[1], tb.shape()[1]);
        let mut out = vec![0.0; m * n];
        matmul_into(ta.data(), tb.data(), m, k, n, &mut out);
        let rg = self.rg(&[a, b]);
        Ok(self.push(Tensor::matrix(m, n, out), Op::MatMul(a, b), rg))
    }

    pub fn sum(&mut self, a: Var) -> Var {
        let s = self.value(a).data().iter().sum();
        self.unary(a, Tensor::scalar(s), Op::Sum(a))
    }

    pub fn mean(&mut self, a: Var) -> Result<Var> {
        let t = self.value(a);
        if t.numel() == 0 {
            return Err(Error::shape("mean", "empty tensor"));
        }
        let s = t.data().iter().sum::<f64>() / t.numel() as f64;
        Ok(self.unary(a, Tensor::scalar(s), Op::Mean(a)))
    }

    pub fn relu(&mut self, a: Var) -> Var {
        let v = self.value(a).map(|x| if x > 0.0 { x } else { 0.0 });
        self.unary(a, v, Op::Relu(a))
    }

    pub fn sigmoid(&mut self, a: Var) -> Var {
        let v = self.value(a).map(sigmoid);
        self.unary(a, v, Op::Sigmoid(a))
    }

    pub fn exp(&mut self, a: Var) -> Var {
        let v = self.value(a).map(libm::exp);
        self.unary(a, v, Op::Exp(a))
    }

    pub fn log(&mut self, a: Var) -> Result<Var> {
        if let Some(bad) = self.value(a).data().iter().find(|&&x| x <= 0.0) {
            return Err(Error::domain("log", format!("non-positive input {bad}")));
        }
        let v = self.value(a).map(libm::log);
        Ok(self.unary(a, v, Op::Log(a)))
    }

    pub fn abs(&mut self, a: Var) -> Var {
        let v = self.value(a).map(libm::fabs);
        self.unary(a, v, Op::Abs(a))
    }

    /// Elementwise `a^p`. Non-integer exponents need a positive base and
    /// negative exponents a nonzero one.
    pub fn pow(&mut self, a: Var, p: f64) -> Result<Var> {
        let integral = libm::trunc(p) == p;
        for &x in self.value(a).data() {
            if (!integral && x <= 0.0 && !(x == 0.0 && p > 1.0)) || (p < 0.0 && x == 0.0) {
                return Err(Error::domain("pow", format!("{x}^{p}")));
            }
        }
        let v = self.value(a).map(|x| libm::pow(x, p));
        Ok(self.unary(a, v, Op::Pow(a, p)))
    }

    pub fn scale(&mut self, a: Var, s: f64) -> Var {
        let v = self.value(a).map(|x| x * s);
        self.unary(a, v, Op::Scale(a, s))
    }

    pub fn add_scalar(&mut self, a: Var, s: f64) -> Var {
        let v = self.value(a).map(|x| x + s);
        self.unary(a, v, Op::AddScalar(a))
    }

    /// Softmax over the last axis (each row of a matrix).
    pub fn softmax(&mut self, a: Var) -> Var {
        let v = row_softmax(self.value(a));
        self.unary(a, v, Op::Softmax(a))
    }

    /// Numerically stable `log(softmax(a))` over the last axis.
    pub fn log_softmax(&mut self, a: Var) -> Var {
        let t = self.value(a);
        let (rows, cols) = t.dims2();
        let mut out = t.clone();
        for r in 0..rows {
            let row = &mut out.data_mut()[r * cols..(r + 1) * cols];
            let max = row.iter().copied().fold(f64::NEG_INFINITY, f64::max);
            let lse = max + libm::log(row.iter().map(|&x| libm::exp(x - max)).sum::<f64>());
            row.iter_mut().for_each(|x| *x -= lse);
        }
        self.unary(a, out, Op::LogSoftmax(a))
    }

    /// Stacks 2-D tensors with equal column counts on top of each other.
    pub fn concat_rows(&mut self, parts: &[Var]) -> Result<Var> {
        let first = parts
            .first()
            .ok_or_else(|| Error::shape("concat", "no inputs"))?;
        let cols = self.value(*first).dims2().1;
        let mut data = Vec::new();
        let mut rows = 0;
        for &p in parts {
            let t = self.value(p);
            let (r, c) = t.dims2();
            if c != cols || t.rank() > 2 {
                return Err(Error::shape(
                    "concat",
                    format!("column mismatch {c} vs {cols}"),
                ));
            }
            rows += r;
            data.extend_from_slice(t.data());
        }
        let rg = self.rg(parts);
        Ok(self.push(
            Tensor::matrix(rows, cols, data),
            Op::ConcatRows(parts.to_vec()),
            rg,
        ))
    }

    /// Joins 2-D tensors with equal row counts side by side.
    pub fn concat_cols(&mut self, parts: &[Var]) -> Result<Var> {
        let first = parts
            .first()
            .ok_or_else(|| Error::shape("concat", "no inputs"))?;
        let rows = self.value(*first).dims2().0;
        let mut widths = Vec::with_capacity(parts.len());
        for &p in parts {
            let t = self.value(p);
            let (r, c) = t.dims2();
            if r != rows || t.rank() > 2 {
                return Err(Error::shape("concat", format!("row mismatch {r} vs {rows}")));
            }
            widths.push(c);
        }
        let cols: usize = widths.iter().sum();
        let mut data = vec![0.0; rows * cols];
        let mut offset = 0;
        for (&p, &w) in parts.iter().zip(&widths) {
            let src = self.value(p).data();
            for r in 0..rows {
                data[r * cols + offset..r * cols + offset + w]
                    .copy_from_slice(&src[r * w..(r + 1) * w]);
            }
            offset += w;
        }
        let rg = self.rg(parts);
        Ok(self.push(
            Tensor::matrix(rows, cols, data),
            Op::ConcatCols(parts.to_vec()),
            rg,
        ))
    }

    /// Gathers rows of a 2-D tensor (elements of a 1-D one).
    pub fn index_select(&mut self, a: Var, indices: &[usize]) -> Result<Var> {
        let t = self.value(a);
        let (rows, cols) = if t.rank() == 1 {
            (t.numel(), 1)
        } else {
            t.dims2()
        };
        if let Some(&bad) = indices.iter().find(|&&i| i >= rows) {
            return Err(Error::shape(
                "index_select",
                format!("index {bad} out of {rows} rows"),
            ));
        }
        let mut data = Vec::with_capacity(indices.len() * cols);
        for &i in indices {
            data.extend_from_slice(&t.data()[i * cols..(i + 1) * cols]);
        }
        let value = if t.rank() == 1 {
            Tensor::vector(data)
        } else {
            Tensor::matrix(indices.len(), cols, data)
        };
        Ok(self.unary(a, value, Op::IndexSelect(a, indices.to_vec())))
    }

    /// Sums row `i` of `a` into row `targets[i]` of a fresh `(slots, cols)`
    /// tensor (elements for 1-D input).
    pub fn scatter_add(&mut self, a: Var, targets: &[usize], slots: usize) -> Result<Var> {
        let t = self.value(a);
        let (rows, cols) = if t.rank() == 1 {
            (t.numel(), 1)
        } else {
            t.dims2()
        };
        if targets.len() != rows {
            return Err(Error::shape(
                "scatter_add",
                format!("{} targets for {rows} rows", targets.len()),
            ));
        }
        if let Some(&bad) = targets.iter().find(|&&i| i >= slots) {
            return Err(Error::shape(
                "scatter_add",
                format!("target {bad} out of {slots} slots"),
            ));
        }
        let mut data = vec![0.0; slots * cols];
        for (r, &dst) in targets.iter().enumerate() {
            let src = &t.data()[r * cols..(r + 1) * cols];
            for (o, s) in data[dst * cols..(dst + 1) * cols].iter_mut().zip(src) {
                *o += s;
            }
        }
        let value = if t.rank() == 1 {
            Tensor::vector(data)
        } else {
            Tensor::matrix(slots, cols, data)
        };
        Ok(self.unary(a, value, Op::ScatterAdd(a, targets.to_vec())))
    }

    pub fn reshape(&mut self, a: Var, shape: &[usize]) -> Result<Var> {
        let t = self.value(a);
        if shape.iter().product::<usize>() != t.numel() {
            return Err(Error::shape(
                "reshape",
                format!("{:?} -> {shape:?}", t.shape()),
            ));
        }
        let v = t.with_shape(shape.to_vec());
        Ok(self.unary(a, v, Op::Reshape(a)))
    }

    /// Reverse sweep from a scalar `loss`.
    pub fn backward(&self, loss: Var) -> Result<Gradients> {
        let lv = self.value(loss);
        if lv.numel() != 1 {
            return Err(Error::NonScalarLoss(lv.numel()));
        }
        let mut grads: Vec<Option<Tensor>> = vec![None; self.nodes.len()];
        grads[loss.0] = Some(Tensor::full(lv.shape(), 1.0));
        for idx in (0..=loss.0).rev() {
            let node = &self.nodes[idx];
            if !node.requires_grad {
                continue;
            }
            let Some(g) = grads[idx].take() else {
                continue;
            };
            self.propagate(idx, &g, &mut grads);
            grads[idx] = Some(g);
        }
        // Only differentiable nodes keep gradients.
        for (g, node) in grads.iter_mut().zip(&self.nodes) {
            if !node.requires_grad {
                *g = None;
            }
        }
        Ok(Gradients { grads })
    }

    fn propagate(&self, idx: usize, g: &Tensor, grads: &mut [Option<Tensor>]) {
        let node = &self.nodes[idx];
        let out = &node.value;
        match &node.op {
            Op::Leaf => {}
            Op::Add(a, b, bc) => {
                self.acc(grads, *a, || g.clone());
                self.acc(grads, *b, || reduce_broadcast(g, *bc, self.value(*b)));
            }
            Op::Sub(a, b, bc) => {
                self.acc(grads, *a, || g.clone());
                self.acc(grads, *b, || {
                    reduce_broadcast(&g.map(|x| -x), *bc, self.value(*b))
                });
            }
            Op::Mul(a, b, bc) => {
                let (ta, tb) = (self.value(*a), self.value(*b));
                let (rows, cols) = ta.dims2();
                self.acc(grads, *a, || {
                    let full = expand(tb, *bc, rows, cols);
                    g.zip(&full, |x, y| x * y)
                });
                self.acc(grads, *b, || {
                    reduce_broadcast(&g.zip(ta, |x, y| x * y), *bc, tb)
                });
            }
            Op::Div(a, b, bc) => {
                let (ta, tb) = (self.value(*a), self.value(*b));
                let (rows, cols) = ta.dims2();
                self.acc(grads, *a, || {
                    let full = expand(tb, *bc, rows, cols);
                    g.zip(&full, |x, y| x / y)
                });
                self.acc(grads, *b, || {
                    let full = expand(tb, *bc, rows, cols);
                    // d(a/b)/db = -a/b^2 = -out/b
                    let mut t = g.zip(out, |x, o| x * o);
                    t = t.zip(&full, |x, y| -x / y);
                    reduce_broadcast(&t, *bc, tb)
                });
            }
            Op::MatMul(a, b) => {
                let (ta, tb) = (self.value(*a), self.value(*b));
                let (m, k, n) = (ta.shape()[0], ta.shape()[1], tb.shape()[1]);
                self.acc(grads, *a, || {
                    let mut d = vec![0.0; m * k];
                    matmul_bt_into(g.data(), tb.data(), m, k, n, &mut d);
                    Tensor::matrix(m, k, d)
                });
                self.acc(grads, *b, || {
                    let mut d = vec![0.0; k * n];
                    matmul_at_into(ta.data(), g.data(), m, k, n, &mut d);
                    Tensor::matrix(k, n, d)
                });
            }
            Op::Sum(a) => {
                let s = g.data()[0];
                self.acc(grads, *a, || Tensor::full(self.value(*a).shape(), s));
            }
            Op::Mean(a) => {
                let t = self.value(*a);
                let s = g.data()[0] / t.numel() as f64;
                self.acc(grads, *a, || Tensor::full(t.shape(), s));
            }
            Op::Relu(a) => {
                // Gradient at exactly zero is taken as zero.
                self.acc(grads, *a, || {
                    g.zip(self.value(*a), |x, v| if v > 0.0 { x } else { 0.0 })
                });
            }
            Op::Sigmoid(a) => {
                self.acc(grads, *a, || g.zip(out, |x, s| x * s * (1.0 - s)));
            }
            Op::Exp(a) => {
                self.acc(grads, *a, || g.zip(out, |x, e| x * e));
            }
            Op::Log(a) => {
                self.acc(grads, *a, || g.zip(self.value(*a), |x, v| x / v));
            }
            Op::Abs(a) => {
                self.acc(grads, *a, || {
                    g.zip(self.value(*a), |x, v| {
                        if v > 0.0 {
                            x
                        } else if v < 0.0 {
                            -x
                        } else {
                            0.0
                        }
                    })
                });
            }
            Op::Pow(a, p) => {
                let p = *p;
                self.acc(grads, *a, || {
                    g.zip(self.value(*a), |x, v| x * p * libm::pow(v, p - 1.0))
                });
            }
            Op::Scale(a, s) => {
                let s = *s;
                self.acc(grads, *a, || g.map(|x| x * s));
            }
            Op::AddScalar(a) => {
                self.acc(grads, *a, || g.clone());
            }
            Op::Softmax(a) => {
                self.acc(grads, *a, || {
                    let (rows, cols) = out.dims2();
                    let mut d = g.clone();
                    for r in 0..rows {
                        let s = &out.data()[r * cols..(r + 1) * cols];
                        let gr = &g.data()[r * cols..(r + 1) * cols];
                        let dot: f64 = s.iter().zip(gr).map(|(a, b)| a * b).sum();
                        for c in 0..cols {
                            d.data_mut()[r * cols + c] = s[c] * (gr[c] - dot);
                        }
                    }
                    d
                });
            }
            Op::LogSoftmax(a) => {
                self.acc(grads, *a, || {
                    let (rows, cols) = out.dims2();
                    let mut d = g.clone();
                    for r in 0..rows {
                        let ls = &out.data()[r * cols..(r + 1) * cols];
                        let gr = &g.data()[r * cols..(r + 1) * cols];
                        let gsum: f64 = gr.iter().sum();
                        for c in 0..cols {
                            d.data_mut()[r * cols + c] = gr[c] - libm::exp(ls[c]) * gsum;
                        }
                    }
                    d
                });
            }
            Op::ConcatRows(parts) => {
                let mut offset = 0;
                for &p in parts {
                    let t = self.value(p);
                    let n = t.numel();
                    self.acc(grads, p, || {
                        Tensor::new(t.shape().to_vec(), g.data()[offset..offset + n].to_vec())
                            .expect("concat grad shape")
                    });
                    offset += n;
                }
            }
            Op::ConcatCols(parts) => {
                let (rows, cols) = out.dims2();
                let mut offset = 0;
                for &p in parts {
                    let t = self.value(p);
                    let w = t.dims2().1;
                    self.acc(grads, p, || {
                        let mut d = Vec::with_capacity(rows * w);
                        for r in 0..rows {
                            d.extend_from_slice(&g.data()[r * cols + offset..r * cols + offset + w]);
                        }
                        Tensor::new(t.shape().to_vec(), d).expect("concat grad shape")
                    });
                    offset += w;
                }
            }
            Op::IndexSelect(a, indices) => {
                let t = self.value(*a);
                let cols = if t.rank() == 1 { 1 } else { t.dims2().1 };
                self.acc(grads, *a, || {
                    let mut d = Tensor::zeros(t.shape());
                    for (r, &src) in indices.iter().enumerate() {
                        let gr = &g.data()[r * cols..(r + 1) * cols];
                        for (o, x) in d.data_mut()[src * cols..(src + 1) * cols]
                            .iter_mut()
                            .zip(gr)
                        {
                            *o += x;
                        }
                    }
                    d
                });
            }
            Op::ScatterAdd(a, targets) => {
                let t = self.value(*a);
                let cols = if t.rank() == 1 { 1 } else { t.dims2().1 };
                self.acc(grads, *a, || {
                    let mut d = Vec::with_capacity(t.numel());
                    for &dst in targets {
                        d.extend_from_slice(&g.data()[dst * cols..(dst + 1) * cols]);
                    }
                    Tensor::new(t.shape().to_vec(), d).expect("scatter grad shape")
                });
            }
            Op::Reshape(a) => {
                let t = self.value(*a);
                self.acc(grads, *a, || g.with_shape(t.shape().to_vec()));
            }
        }
    }

    fn acc(&self, grads: &mut [Option<Tensor>], target: Var, contribution: impl FnOnce() -> Tensor) {
        if !self.nodes[target.0].requires_grad {
            return;
        }
        let c = contribution();
        match &mut grads[target.0] {
            Some(existing) => existing.add_assign(&c),
            slot @ None => *slot = Some(c),
        }
    }
}

pub fn sigmoid(x: f64) -> f64 {
    if x >= 0.0 {
        1.0 / (1.0 + libm::exp(-x))
    } else {
        let e = libm::exp(x);
        e / (1.0 + e)
    }
}

pub(crate) fn row_softmax(t: &Tensor) -> Tensor {
    let (rows, cols) = t.dims2();
    let mut out = t.clone();
    for r in 0..rows {
        let row = &mut out.data_mut()[r * cols..(r + 1) * cols];
        let max = row.iter().copied().fold(f64::NEG_INFINITY, f64::max);
        let mut total = 0.0;
        for x in row.iter_mut() {
            *x = libm::exp(*x - max);
            total += *x;
        }
        row.iter_mut().for_each(|x| *x /= total);
    }
    out
}

/// Materializes a (possibly row-broadcast) right operand at the full
/// `rows x cols` shape of the left one.
fn expand(t: &Tensor, bc: Broadcast, rows: usize, cols: usize) -> Tensor {
    match bc {
        Broadcast::Same => t.clone(),
        Broadcast::Row => {
            let mut d = Vec::with_capacity(rows * cols);
            for _ in 0..rows {
                d.extend_from_slice(t.data());
            }
            Tensor::matrix(rows, cols, d)
        }
    }
}

fn reduce_broadcast(g: &Tensor, bc: Broadcast, target: &Tensor) -> Tensor {
    match bc {
        Broadcast::Same => g.clone(),
        Broadcast::Row => {
            let (rows, cols) = g.dims2();
            let mut d = vec![0.0; cols];
            for r in 0..rows {
                for (o, x) in d.iter_mut().zip(&g.data()[r * cols..(r + 1) * cols]) {
                    *o += x;
                }
            }
            Tensor::new(target.shape().to_vec(), d).expect("broadcast grad shape")
        }
    }
}
