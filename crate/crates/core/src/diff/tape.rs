//! Reverse-mode differentiation over dense matrices.
//!
//! A [`Tape`] records every primitive applied to [`Var`]s in construction
//! order. [`Tape::backward`] replays the record in reverse and returns the
//! adjoint of every leaf, with the leaves registered through [`Tape::param`]
//! reported in registration order.
//!
//! The primitive set is deliberately small: it covers exactly what the
//! encoder, tokenizer heads, Chamfer/alignment distances and the hinge
//! losses need. Broadcasting is limited to adding a row vector to every row
//! of a matrix.

use std::cell::RefCell;

use super::tensor::{matmul_raw, Tensor};
use crate::error::{Error, Result};

#[derive(Debug, Clone)]
enum Op {
    Leaf,
    MatMul(usize, usize),
    Add(usize, usize),
    Sub(usize, usize),
    Mul(usize, usize),
    AddRow(usize, usize),
    Scale(usize, f64),
    Shift(usize),
    Relu(usize),
    Sigmoid(usize),
    Tanh(usize),
    Exp(usize),
    Abs(usize),
    Transpose(usize),
    Sum(usize),
    PairwiseL1(usize, usize),
    RowMin(usize, Vec<usize>),
    ConcatCols(usize, usize),
    GatherRows(usize, Vec<usize>),
    ScatterAddRows(usize, Vec<usize>),
    PadRows(usize),
    LogRowNormalize(usize),
    LogColNormalize(usize),
    OuterSub(usize, usize),
}

#[derive(Debug)]
struct Node {
    value: Tensor,
    op: Op,
}

/// Ordered record of primitive applications.
#[derive(Debug, Default)]
pub struct Tape {
    nodes: RefCell<Vec<Node>>,
    params: RefCell<Vec<usize>>,
}

/// Handle to a node on a [`Tape`].
#[derive(Clone, Copy)]
pub struct Var<'t> {
    tape: &'t Tape,
    id: usize,
}

impl std::fmt::Debug for Var<'_> {
    fn fmt(&self, f: &mut std::fmt::Formatter<'_>) -> std::fmt::Result {
        write!(f, "Var#{} {:?}", self.id, self.shape())
    }
}

/// Adjoints produced by [`Tape::backward`].
#[derive(Debug)]
pub struct Gradients {
    adjoints: Vec<Option<Tensor>>,
    shapes: Vec<(usize, usize)>,
    params: Vec<usize>,
}

impl Gradients {
    /// Gradient of the loss with respect to the leaf `var`; zeros if the loss
    /// does not depend on it.
    pub fn wrt(&self, var: Var<'_>) -> Tensor {
        let (r, c) = self.shapes[var.id];
        self.adjoints[var.id].clone().unwrap_or_else(|| Tensor::zeros(r, c))
    }

    /// Gradients of all registered parameters, in registration order.
    pub fn params(&self) -> Vec<Tensor> {
        self.params
            .iter()
            .map(|&id| {
                let (r, c) = self.shapes[id];
                self.adjoints[id].clone().unwrap_or_else(|| Tensor::zeros(r, c))
            })
            .collect()
    }
}

impl Tape {
    pub fn new() -> Self {
        Self::default()
    }

    pub fn len(&self) -> usize {
        self.nodes.borrow().len()
    }

    pub fn is_empty(&self) -> bool {
        self.len() == 0
    }

    fn push(&self, value: Tensor, op: Op) -> Var<'_> {
        let mut nodes = self.nodes.borrow_mut();
        nodes.push(Node { value, op });
        Var {
            tape: self,
            id: nodes.len() - 1,
        }
    }

    /// A leaf whose gradient is not collected into [`Gradients::params`].
    pub fn constant(&self, value: Tensor) -> Var<'_> {
        self.push(value, Op::Leaf)
    }

    /// A trainable leaf.
    pub fn param(&self, value: &Tensor) -> Var<'_> {
        let v = self.push(value.clone(), Op::Leaf);
        self.params.borrow_mut().push(v.id);
        v
    }

    /// Back-propagates from a scalar `loss`.
    pub fn backward(&self, loss: Var<'_>) -> Result<Gradients> {
        let nodes = self.nodes.borrow();
        let shape = nodes[loss.id].value.shape();
        if shape != (1, 1) {
            return Err(Error::NonScalarLoss(shape));
        }
        let mut adj: Vec<Option<Tensor>> = vec![None; nodes.len()];
        adj[loss.id] = Some(Tensor::scalar(1.0));

        for id in (0..=loss.id).rev() {
            let Some(g) = adj[id].take() else { continue };
            let node = &nodes[id];
            let y = &node.value;
            let val = |i: usize| &nodes[i].value;
            match &node.op {
                Op::Leaf => {
                    adj[id] = Some(g);
                    continue;
                }
                Op::MatMul(a, b) => {
                    let ga = matmul_raw(&g, &val(*b).transpose());
                    let gb = matmul_raw(&val(*a).transpose(), &g);
                    accumulate(&mut adj, *a, ga);
                    accumulate(&mut adj, *b, gb);
                }
                Op::Add(a, b) => {
                    accumulate(&mut adj, *a, g.clone());
                    accumulate(&mut adj, *b, g);
                }
                Op::Sub(a, b) => {
                    accumulate(&mut adj, *b, g.map(|v| -v));
                    accumulate(&mut adj, *a, g);
                }
                Op::Mul(a, b) => {
                    let ga = elementwise(&g, val(*b), |g, x| g * x);
                    let gb = elementwise(&g, val(*a), |g, x| g * x);
                    accumulate(&mut adj, *a, ga);
                    accumulate(&mut adj, *b, gb);
                }
                Op::AddRow(x, row) => {
                    let mut gr = vec![0.0; g.cols()];
                    for r in 0..g.rows() {
                        for (acc, v) in gr.iter_mut().zip(g.row(r)) {
                            *acc += v;
                        }
                    }
                    accumulate(&mut adj, *row, Tensor::from_vec(1, g.cols(), gr));
                    accumulate(&mut adj, *x, g);
                }
                Op::Scale(x, s) => accumulate(&mut adj, *x, g.map(|v| v * s)),
                Op::Shift(x) => accumulate(&mut adj, *x, g),
                Op::Relu(x) => {
                    let gx = elementwise(&g, val(*x), |g, x| if x > 0.0 { g } else { 0.0 });
                    accumulate(&mut adj, *x, gx);
                }
                Op::Sigmoid(x) => accumulate(&mut adj, *x, elementwise(&g, y, |g, s| g * s * (1.0 - s))),
                Op::Tanh(x) => accumulate(&mut adj, *x, elementwise(&g, y, |g, t| g * (1.0 - t * t))),
                Op::Exp(x) => accumulate(&mut adj, *x, elementwise(&g, y, |g, e| g * e)),
                Op::Abs(x) => accumulate(&mut adj, *x, elementwise(&g, val(*x), |g, x| g * sign(x))),
                Op::Transpose(x) => accumulate(&mut adj, *x, g.transpose()),
                Op::Sum(x) => {
                    let (r, c) = val(*x).shape();
                    accumulate(&mut adj, *x, Tensor::full(r, c, g.item()));
                }
                Op::PairwiseL1(a, b) => {
                    let (av, bv) = (val(*a), val(*b));
                    let (n, m, d) = (av.rows(), bv.rows(), av.cols());
                    let mut ga = Tensor::zeros(n, d);
                    let mut gb = Tensor::zeros(m, d);
                    for i in 0..n {
                        for j in 0..m {
                            let gij = g.get(i, j);
                            if gij == 0.0 {
                                continue;
                            }
                            for k in 0..d {
                                let s = gij * sign(av.get(i, k) - bv.get(j, k));
                                ga.data_mut()[i * d + k] += s;
                                gb.data_mut()[j * d + k] -= s;
                            }
                        }
                    }
                    accumulate(&mut adj, *a, ga);
                    accumulate(&mut adj, *b, gb);
                }
                Op::RowMin(x, arg) => {
                    let (r, c) = val(*x).shape();
                    let mut gx = Tensor::zeros(r, c);
                    for (i, &j) in arg.iter().enumerate() {
                        gx.set(i, j, g.get(i, 0));
                    }
                    accumulate(&mut adj, *x, gx);
                }
                Op::ConcatCols(a, b) => {
                    let ca = val(*a).cols();
                    let cb = val(*b).cols();
                    let mut ga = Vec::with_capacity(g.rows() * ca);
                    let mut gb = Vec::with_capacity(g.rows() * cb);
                    for r in 0..g.rows() {
                        let row = g.row(r);
                        ga.extend_from_slice(&row[..ca]);
                        gb.extend_from_slice(&row[ca..]);
                    }
                    accumulate(&mut adj, *a, Tensor::from_vec(g.rows(), ca, ga));
                    accumulate(&mut adj, *b, Tensor::from_vec(g.rows(), cb, gb));
                }
                Op::GatherRows(x, idx) => {
                    let (r, c) = val(*x).shape();
                    let mut gx = Tensor::zeros(r, c);
                    for (e, &src) in idx.iter().enumerate() {
                        for (o, v) in gx.row_mut(src).iter_mut().zip(g.row(e)) {
                            *o += v;
                        }
                    }
                    accumulate(&mut adj, *x, gx);
                }
                Op::ScatterAddRows(x, idx) => {
                    let c = g.cols();
                    let mut gx = Vec::with_capacity(idx.len() * c);
                    for &dst in idx {
                        gx.extend_from_slice(g.row(dst));
                    }
                    accumulate(&mut adj, *x, Tensor::from_vec(idx.len(), c, gx));
                }
                Op::PadRows(x) => {
                    let r = val(*x).rows();
                    accumulate(&mut adj, *x, g.slice_rows(0, r));
                }
                Op::LogRowNormalize(x) => {
                    // y = x - lse(x); dx = g - exp(y) * sum(g) per row.
                    let (rows, cols) = y.shape();
                    let mut gx = Tensor::zeros(rows, cols);
                    for r in 0..rows {
                        let s: f64 = g.row(r).iter().sum();
                        for ((o, gv), yv) in gx.row_mut(r).iter_mut().zip(g.row(r)).zip(y.row(r)) {
                            *o = gv - yv.exp() * s;
                        }
                    }
                    accumulate(&mut adj, *x, gx);
                }
                Op::LogColNormalize(x) => {
                    let (rows, cols) = y.shape();
                    let mut gx = Tensor::zeros(rows, cols);
                    for c in 0..cols {
                        let s: f64 = (0..rows).map(|r| g.get(r, c)).sum();
                        for r in 0..rows {
                            gx.set(r, c, g.get(r, c) - y.get(r, c).exp() * s);
                        }
                    }
                    accumulate(&mut adj, *x, gx);
                }
                Op::OuterSub(a, b) => {
                    let (p, q) = g.shape();
                    let mut ga = vec![0.0; p];
                    let mut gb = vec![0.0; q];
                    for i in 0..p {
                        for j in 0..q {
                            let v = g.get(i, j);
                            ga[i] += v;
                            gb[j] -= v;
                        }
                    }
                    accumulate(&mut adj, *a, Tensor::from_vec(p, 1, ga));
                    accumulate(&mut adj, *b, Tensor::from_vec(q, 1, gb));
                }
            }
        }
        // Only leaf adjoints survive the sweep.
        let shapes = nodes.iter().map(|n| n.value.shape()).collect();
        Ok(Gradients {
            adjoints: adj,
            shapes,
            params: self.params.borrow().clone(),
        })
    }
}

#[inline]
fn sign(x: f64) -> f64 {
    if x > 0.0 {
        1.0
    } else if x < 0.0 {
        -1.0
    } else {
        0.0
    }
}

fn elementwise(g: &Tensor, x: &Tensor, f: impl Fn(f64, f64) -> f64) -> Tensor {
    Tensor::from_vec(
        g.rows(),
        g.cols(),
        g.data().iter().zip(x.data()).map(|(&g, &x)| f(g, x)).collect(),
    )
}

fn accumulate(adj: &mut [Option<Tensor>], id: usize, g: Tensor) {
    match &mut adj[id] {
        Some(existing) => existing.add_assign(&g),
        slot @ None => *slot = Some(g),
    }
}

impl<'t> Var<'t> {
    pub fn tape(&self) -> &'t Tape {
        self.tape
    }

    pub fn shape(&self) -> (usize, usize) {
        self.tape.nodes.borrow()[self.id].value.shape()
    }

    /// Copy of the forward value.
    pub fn value(&self) -> Tensor {
        self.tape.nodes.borrow()[self.id].value.clone()
    }

    /// Scalar forward value of a `1 x 1` node.
    pub fn item(&self) -> f64 {
        self.tape.nodes.borrow()[self.id].value.item()
    }

    fn unary(self, op: Op, f: impl FnOnce(&Tensor) -> Tensor) -> Var<'t> {
        let out = f(&self.tape.nodes.borrow()[self.id].value);
        self.tape.push(out, op)
    }

    fn binary(
        self,
        other: Var<'t>,
        op: Op,
        f: impl FnOnce(&Tensor, &Tensor) -> Result<Tensor>,
    ) -> Result<Var<'t>> {
        let out = {
            let nodes = self.tape.nodes.borrow();
            f(&nodes[self.id].value, &nodes[other.id].value)?
        };
        Ok(self.tape.push(out, op))
    }

    pub fn matmul(self, other: Var<'t>) -> Result<Var<'t>> {
        self.binary(other, Op::MatMul(self.id, other.id), |a, b| a.matmul(b))
    }

    pub fn add(self, other: Var<'t>) -> Result<Var<'t>> {
        self.binary(other, Op::Add(self.id, other.id), |a, b| a.zip_map(b, "add", |x, y| x + y))
    }

    pub fn sub(self, other: Var<'t>) -> Result<Var<'t>> {
        self.binary(other, Op::Sub(self.id, other.id), |a, b| a.zip_map(b, "sub", |x, y| x - y))
    }

    /// Elementwise product.
    pub fn mul(self, other: Var<'t>) -> Result<Var<'t>> {
        self.binary(other, Op::Mul(self.id, other.id), |a, b| a.zip_map(b, "mul", |x, y| x * y))
    }

    /// Adds a `1 x cols` row vector to every row.
    pub fn add_row(self, row: Var<'t>) -> Result<Var<'t>> {
        self.binary(row, Op::AddRow(self.id, row.id), |a, r| a.add_row(r))
    }

    pub fn scale(self, s: f64) -> Var<'t> {
        self.unary(Op::Scale(self.id, s), |x| x.map(|v| v * s))
    }

    /// Adds a constant to every entry.
    pub fn shift(self, c: f64) -> Var<'t> {
        self.unary(Op::Shift(self.id), |x| x.map(|v| v + c))
    }

    pub fn neg(self) -> Var<'t> {
        self.scale(-1.0)
    }

    /// `1 - x`, elementwise.
    pub fn one_minus(self) -> Var<'t> {
        self.neg().shift(1.0)
    }

    pub fn relu(self) -> Var<'t> {
        self.unary(Op::Relu(self.id), |x| x.map(|v| v.max(0.0)))
    }

    /// `[x]_+`; identical to [`Var::relu`], named for the ranking losses.
    pub fn hinge(self) -> Var<'t> {
        self.relu()
    }

    pub fn sigmoid(self) -> Var<'t> {
        self.unary(Op::Sigmoid(self.id), |x| x.map(sigmoid))
    }

    pub fn tanh(self) -> Var<'t> {
        self.unary(Op::Tanh(self.id), |x| x.map(f64::tanh))
    }

    pub fn exp(self) -> Var<'t> {
        self.unary(Op::Exp(self.id), |x| x.map(f64::exp))
    }

    pub fn abs(self) -> Var<'t> {
        self.unary(Op::Abs(self.id), |x| x.map(f64::abs))
    }

    pub fn transpose(self) -> Var<'t> {
        self.unary(Op::Transpose(self.id), Tensor::transpose)
    }

    /// Sum of all entries as a `1 x 1` node.
    pub fn sum(self) -> Var<'t> {
        self.unary(Op::Sum(self.id), |x| Tensor::scalar(x.sum()))
    }

    /// `sum(|a - b|)` over all entries.
    pub fn l1_diff(self, other: Var<'t>) -> Result<Var<'t>> {
        Ok(self.sub(other)?.abs().sum())
    }

    /// `out[i][j] = sum_k |a[i][k] - b[j][k]|`.
    pub fn pairwise_l1(self, other: Var<'t>) -> Result<Var<'t>> {
        self.binary(other, Op::PairwiseL1(self.id, other.id), |a, b| {
            if a.cols() != b.cols() {
                return Err(Error::shape("pairwise_l1", a.shape(), b.shape()));
            }
            Ok(pairwise_l1(a, b))
        })
    }

    /// Column vector of per-row minima. Ties go to the smallest column
    /// index, which is also where the gradient is routed.
    pub fn row_min(self) -> Result<Var<'t>> {
        let (out, arg) = {
            let nodes = self.tape.nodes.borrow();
            let x = &nodes[self.id].value;
            if x.cols() == 0 {
                return Err(Error::EmptyNodeSet("row_min"));
            }
            let mut out = Vec::with_capacity(x.rows());
            let mut arg = Vec::with_capacity(x.rows());
            for r in 0..x.rows() {
                let (j, v) = x
                    .row(r)
                    .iter()
                    .enumerate()
                    .fold((0, f64::INFINITY), |best, (j, &v)| if v < best.1 { (j, v) } else { best });
                out.push(v);
                arg.push(j);
            }
            (Tensor::from_vec(x.rows(), 1, out), arg)
        };
        Ok(self.tape.push(out, Op::RowMin(self.id, arg)))
    }

    pub fn concat_cols(self, other: Var<'t>) -> Result<Var<'t>> {
        self.binary(other, Op::ConcatCols(self.id, other.id), |a, b| {
            if a.rows() != b.rows() {
                return Err(Error::shape("concat_cols", a.shape(), b.shape()));
            }
            let mut data = Vec::with_capacity(a.len() + b.len());
            for r in 0..a.rows() {
                data.extend_from_slice(a.row(r));
                data.extend_from_slice(b.row(r));
            }
            Ok(Tensor::from_vec(a.rows(), a.cols() + b.cols(), data))
        })
    }

    /// `out[e] = x[idx[e]]`.
    pub fn gather_rows(self, idx: &[usize]) -> Result<Var<'t>> {
        let out = {
            let nodes = self.tape.nodes.borrow();
            let x = &nodes[self.id].value;
            if let Some(&bad) = idx.iter().find(|&&i| i >= x.rows()) {
                return Err(Error::shape("gather_rows", x.shape(), (bad, 0)));
            }
            let mut data = Vec::with_capacity(idx.len() * x.cols());
            for &i in idx {
                data.extend_from_slice(x.row(i));
            }
            Tensor::from_vec(idx.len(), x.cols(), data)
        };
        Ok(self.tape.push(out, Op::GatherRows(self.id, idx.to_vec())))
    }

    /// `out[idx[e]] += x[e]` into a `rows x cols` zero matrix.
    pub fn scatter_add_rows(self, idx: &[usize], rows: usize) -> Result<Var<'t>> {
        let out = {
            let nodes = self.tape.nodes.borrow();
            let x = &nodes[self.id].value;
            if x.rows() != idx.len() || idx.iter().any(|&i| i >= rows) {
                return Err(Error::shape("scatter_add_rows", x.shape(), (idx.len(), rows)));
            }
            let mut out = Tensor::zeros(rows, x.cols());
            for (e, &dst) in idx.iter().enumerate() {
                for (o, v) in out.row_mut(dst).iter_mut().zip(x.row(e)) {
                    *o += v;
                }
            }
            out
        };
        Ok(self.tape.push(out, Op::ScatterAddRows(self.id, idx.to_vec())))
    }

    /// Appends zero rows up to `rows`.
    pub fn pad_rows(self, rows: usize) -> Var<'t> {
        self.unary(Op::PadRows(self.id), |x| x.pad_rows(rows))
    }

    /// Subtracts each row's log-sum-exp: the log of dividing `exp(self)`
    /// by its row sums.
    pub fn log_row_normalize(self) -> Var<'t> {
        self.unary(Op::LogRowNormalize(self.id), log_row_normalize)
    }

    /// Column counterpart of [`Var::log_row_normalize`].
    pub fn log_col_normalize(self) -> Var<'t> {
        self.unary(Op::LogColNormalize(self.id), log_col_normalize)
    }

    /// `out[i][j] = a[i] - b[j]` for column vectors `a` and `b`.
    pub fn outer_sub(self, other: Var<'t>) -> Result<Var<'t>> {
        self.binary(other, Op::OuterSub(self.id, other.id), |a, b| {
            if a.cols() != 1 || b.cols() != 1 {
                return Err(Error::shape("outer_sub", a.shape(), b.shape()));
            }
            let mut data = Vec::with_capacity(a.rows() * b.rows());
            for &x in a.data() {
                data.extend(b.data().iter().map(|&y| x - y));
            }
            Ok(Tensor::from_vec(a.rows(), b.rows(), data))
        })
    }
}

#[inline]
pub fn sigmoid(x: f64) -> f64 {
    if x >= 0.0 {
        1.0 / (1.0 + (-x).exp())
    } else {
        let e = x.exp();
        e / (1.0 + e)
    }
}

pub(crate) fn pairwise_l1(a: &Tensor, b: &Tensor) -> Tensor {
    let mut data = Vec::with_capacity(a.rows() * b.rows());
    for i in 0..a.rows() {
        let ra = a.row(i);
        for j in 0..b.rows() {
            data.push(ra.iter().zip(b.row(j)).map(|(x, y)| (x - y).abs()).sum());
        }
    }
    Tensor::from_vec(a.rows(), b.rows(), data)
}

fn log_sum_exp<'a>(values: impl Iterator<Item = &'a f64> + Clone) -> f64 {
    let max = values.clone().copied().fold(f64::NEG_INFINITY, f64::max);
    if max == f64::NEG_INFINITY {
        return max;
    }
    max + values.map(|v| (v - max).exp()).sum::<f64>().ln()
}

pub(crate) fn log_row_normalize(x: &Tensor) -> Tensor {
    let mut out = x.clone();
    for r in 0..x.rows() {
        let lse = log_sum_exp(x.row(r).iter());
        out.row_mut(r).iter_mut().for_each(|v| *v -= lse);
    }
    out
}

pub(crate) fn log_col_normalize(x: &Tensor) -> Tensor {
    log_row_normalize(&x.transpose()).transpose()
}
