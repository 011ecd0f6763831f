//! Define-by-run reverse-mode differentiation over dense matrices.
//!
//! Every operation evaluates eagerly and appends a node holding its value, so
//! the node list is topologically ordered by construction. `backward` walks
//! the list in reverse and accumulates adjoints.

use std::sync::Arc;

use super::param::{ParamId, ParamStore};
use super::Matrix;
use crate::error::{Error, Result};
use crate::scalar::Real;

/// Guard used by `sqrt` when differentiating at zero.
pub const SQRT_EPS: f64 = 1e-12;

/// Handle to a node on a [`Tape`].
#[derive(Clone, Copy, Debug, PartialEq, Eq, Hash)]
pub struct Var(usize);

impl Var {
    pub fn id(self) -> usize {
        self.0
    }
}

#[derive(Clone, Debug)]
enum Op<T> {
    Leaf,
    Param(ParamId),
    MatMul(Var, Var),
    Add(Var, Var),
    Sub(Var, Var),
    Mul(Var, Var),
    AddRow(Var, Var),
    MulRow(Var, Var),
    SubOuter(Var, Var),
    DivCol(Var, Var),
    MulScalar(Var, Var),
    Scale(Var, T),
    Offset(Var, T),
    Relu(Var),
    LeakyRelu(Var, T),
    Tanh(Var),
    Softsign(Var),
    Exp(Var),
    Log(Var),
    Square(Var),
    Sqrt(Var),
    Recip(Var),
    Clamp(Var, T, T),
    Sum(Var),
    Mean(Var),
    SumRows(Var),
    SumCols(Var),
    LogSumExpRows(Var),
    ConcatCols(Vec<Var>),
    SliceCols(Var, usize, usize),
    Transpose(Var),
    PairwiseSqDist(Var),
    Gather(Var, Arc<[(usize, usize)]>),
    ZeroDiag(Var),
}

impl<T> Op<T> {
    fn name(&self) -> &'static str {
        match self {
            Op::Leaf => "leaf",
            Op::Param(_) => "param",
            Op::MatMul(..) => "matmul",
            Op::Add(..) => "add",
            Op::Sub(..) => "sub",
            Op::Mul(..) => "mul",
            Op::AddRow(..) => "add_row",
            Op::MulRow(..) => "mul_row",
            Op::SubOuter(..) => "sub_outer",
            Op::DivCol(..) => "div_col",
            Op::MulScalar(..) => "mul_scalar",
            Op::Scale(..) => "scale",
            Op::Offset(..) => "offset",
            Op::Relu(_) => "relu",
            Op::LeakyRelu(..) => "leaky_relu",
            Op::Tanh(_) => "tanh",
            Op::Softsign(_) => "softsign",
            Op::Exp(_) => "exp",
            Op::Log(_) => "log",
            Op::Square(_) => "square",
            Op::Sqrt(_) => "sqrt",
            Op::Recip(_) => "recip",
            Op::Clamp(..) => "clamp",
            Op::Sum(_) => "sum",
            Op::Mean(_) => "mean",
            Op::SumRows(_) => "sum_rows",
            Op::SumCols(_) => "sum_cols",
            Op::LogSumExpRows(_) => "logsumexp_rows",
            Op::ConcatCols(_) => "concat_cols",
            Op::SliceCols(..) => "slice_cols",
            Op::Transpose(_) => "transpose",
            Op::PairwiseSqDist(_) => "pairwise_sqdist",
            Op::Gather(..) => "gather",
            Op::ZeroDiag(_) => "zero_diag",
        }
    }

    fn parents(&self) -> Vec<Var> {
        match self {
            Op::Leaf | Op::Param(_) => vec![],
            Op::MatMul(a, b)
            | Op::Add(a, b)
            | Op::Sub(a, b)
            | Op::Mul(a, b)
            | Op::AddRow(a, b)
            | Op::MulRow(a, b)
            | Op::SubOuter(a, b)
            | Op::DivCol(a, b)
            | Op::MulScalar(a, b) => vec![*a, *b],
            Op::ConcatCols(vs) => vs.clone(),
            Op::Scale(a, _)
            | Op::Offset(a, _)
            | Op::Relu(a)
            | Op::LeakyRelu(a, _)
            | Op::Tanh(a)
            | Op::Softsign(a)
            | Op::Exp(a)
            | Op::Log(a)
            | Op::Square(a)
            | Op::Sqrt(a)
            | Op::Recip(a)
            | Op::Clamp(a, ..)
            | Op::Sum(a)
            | Op::Mean(a)
            | Op::SumRows(a)
            | Op::SumCols(a)
            | Op::LogSumExpRows(a)
            | Op::SliceCols(a, ..)
            | Op::Transpose(a)
            | Op::PairwiseSqDist(a)
            | Op::Gather(a, _)
            | Op::ZeroDiag(a) => vec![*a],
        }
    }
}

struct Node<T: Real> {
    op: Op<T>,
    value: Matrix<T>,
    needs_grad: bool,
}

/// Record of a differentiable computation.
pub struct Tape<T: Real> {
    nodes: Vec<Node<T>>,
}

impl<T: Real> Default for Tape<T> {
    fn default() -> Self {
        Self::new()
    }
}

impl<T: Real> Tape<T> {
    pub fn new() -> Self {
        Tape { nodes: Vec::new() }
    }

    pub fn len(&self) -> usize {
        self.nodes.len()
    }

    pub fn is_empty(&self) -> bool {
        self.nodes.is_empty()
    }

    pub fn value(&self, v: Var) -> &Matrix<T> {
        &self.nodes[v.0].value
    }

    pub fn shape(&self, v: Var) -> (usize, usize) {
        self.nodes[v.0].value.shape()
    }

    /// Value of a 1x1 node.
    pub fn scalar(&self, v: Var) -> T {
        self.nodes[v.0].value.item()
    }

    /// Ids of the parents of `v`. Always smaller than `v.id()`.
    pub fn parents(&self, v: Var) -> Vec<Var> {
        self.nodes[v.0].op.parents()
    }

    pub fn op_name(&self, v: Var) -> &'static str {
        self.nodes[v.0].op.name()
    }

    fn push(&mut self, op: Op<T>, value: Matrix<T>) -> Result<Var> {
        let id = self.nodes.len();
        if !value.all_finite() {
            return Err(Error::NonFinite {
                node: id,
                op: op.name(),
            });
        }
        let needs_grad = match &op {
            Op::Leaf => false,
            Op::Param(_) => true,
            other => other.parents().iter().any(|p| self.nodes[p.0].needs_grad),
        };
        self.nodes.push(Node {
            op,
            value,
            needs_grad,
        });
        Ok(Var(id))
    }

    fn shape_err(&self, op: &'static str, detail: String) -> Error {
        Error::Shape {
            node: self.nodes.len(),
            op,
            detail,
        }
    }

    fn same_shape(&self, op: &'static str, a: Var, b: Var) -> Result<()> {
        let (sa, sb) = (self.shape(a), self.shape(b));
        if sa != sb {
            return Err(self.shape_err(op, format!("{sa:?} vs {sb:?}")));
        }
        Ok(())
    }

    /// A constant input; receives no gradient.
    pub fn constant(&mut self, value: Matrix<T>) -> Result<Var> {
        self.push(Op::Leaf, value)
    }

    pub fn constant_scalar(&mut self, value: T) -> Result<Var> {
        self.constant(Matrix::scalar(value))
    }

    /// Snapshots a parameter's current value onto the tape.
    pub fn param(&mut self, store: &ParamStore<T>, id: ParamId) -> Result<Var> {
        self.push(Op::Param(id), store.value(id).clone())
    }

    pub fn matmul(&mut self, a: Var, b: Var) -> Result<Var> {
        let (va, vb) = (self.value(a), self.value(b));
        if va.cols() != vb.rows() {
            return Err(self.shape_err(
                "matmul",
                format!("{:?} * {:?}", va.shape(), vb.shape()),
            ));
        }
        let out = va.matmul(vb)?;
        self.push(Op::MatMul(a, b), out)
    }

    pub fn add(&mut self, a: Var, b: Var) -> Result<Var> {
        self.same_shape("add", a, b)?;
        let out = self.value(a).zip_map(self.value(b), |x, y| x + y);
        self.push(Op::Add(a, b), out)
    }

    pub fn sub(&mut self, a: Var, b: Var) -> Result<Var> {
        self.same_shape("sub", a, b)?;
        let out = self.value(a).zip_map(self.value(b), |x, y| x - y);
        self.push(Op::Sub(a, b), out)
    }

    /// Elementwise product.
    pub fn mul(&mut self, a: Var, b: Var) -> Result<Var> {
        self.same_shape("mul", a, b)?;
        let out = self.value(a).zip_map(self.value(b), |x, y| x * y);
        self.push(Op::Mul(a, b), out)
    }

    /// `x + row` with a `1 x c` row broadcast over the rows of `x`.
    pub fn add_row(&mut self, x: Var, row: Var) -> Result<Var> {
        let (vx, vr) = (self.value(x), self.value(row));
        if vr.rows() != 1 || vr.cols() != vx.cols() {
            return Err(self.shape_err(
                "add_row",
                format!("{:?} + row {:?}", vx.shape(), vr.shape()),
            ));
        }
        let mut out = vx.clone();
        let r = vr.as_slice();
        let c = vx.cols();
        for (k, v) in out.as_mut_slice().iter_mut().enumerate() {
            *v += r[k % c];
        }
        self.push(Op::AddRow(x, row), out)
    }

    /// `x * row` with a `1 x c` row broadcast over the rows of `x`.
    pub fn mul_row(&mut self, x: Var, row: Var) -> Result<Var> {
        let (vx, vr) = (self.value(x), self.value(row));
        if vr.rows() != 1 || vr.cols() != vx.cols() {
            return Err(self.shape_err(
                "mul_row",
                format!("{:?} * row {:?}", vx.shape(), vr.shape()),
            ));
        }
        let mut out = vx.clone();
        let r = vr.as_slice();
        let c = vx.cols();
        for (k, v) in out.as_mut_slice().iter_mut().enumerate() {
            *v *= r[k % c];
        }
        self.push(Op::MulRow(x, row), out)
    }

    /// Outer difference `out[i, j] = col[i] - row[j]` of an `n x 1` column
    /// and a `1 x k` row.
    pub fn sub_outer(&mut self, col: Var, row: Var) -> Result<Var> {
        let (vc, vr) = (self.value(col), self.value(row));
        if vc.cols() != 1 || vr.rows() != 1 {
            return Err(self.shape_err(
                "sub_outer",
                format!("col {:?} - row {:?}", vc.shape(), vr.shape()),
            ));
        }
        let out = Matrix::from_fn(vc.rows(), vr.cols(), |i, j| vc[(i, 0)] - vr[(0, j)]);
        self.push(Op::SubOuter(col, row), out)
    }

    /// Divides row `i` of `x` by `col[i]` (`col` is `n x 1`).
    pub fn div_col(&mut self, x: Var, col: Var) -> Result<Var> {
        let (vx, vc) = (self.value(x), self.value(col));
        if vc.cols() != 1 || vc.rows() != vx.rows() {
            return Err(self.shape_err(
                "div_col",
                format!("{:?} / col {:?}", vx.shape(), vc.shape()),
            ));
        }
        let mut out = vx.clone();
        for i in 0..vx.rows() {
            let d = vc[(i, 0)];
            out.row_mut(i).iter_mut().for_each(|v| *v /= d);
        }
        self.push(Op::DivCol(x, col), out)
    }

    /// `x * s` with `s` a 1x1 node.
    pub fn mul_scalar(&mut self, x: Var, s: Var) -> Result<Var> {
        if self.shape(s) != (1, 1) {
            return Err(self.shape_err("mul_scalar", format!("scalar is {:?}", self.shape(s))));
        }
        let sv = self.scalar(s);
        let out = self.value(x).map(|v| v * sv);
        self.push(Op::MulScalar(x, s), out)
    }

    pub fn scale(&mut self, x: Var, c: f64) -> Result<Var> {
        let c = T::lit(c);
        let out = self.value(x).map(|v| v * c);
        self.push(Op::Scale(x, c), out)
    }

    pub fn neg(&mut self, x: Var) -> Result<Var> {
        self.scale(x, -1.0)
    }

    /// `x + c` elementwise.
    pub fn offset(&mut self, x: Var, c: f64) -> Result<Var> {
        let c = T::lit(c);
        let out = self.value(x).map(|v| v + c);
        self.push(Op::Offset(x, c), out)
    }

    pub fn relu(&mut self, x: Var) -> Result<Var> {
        let out = self.value(x).map(|v| v.max(T::zero()));
        self.push(Op::Relu(x), out)
    }

    pub fn leaky_relu(&mut self, x: Var, slope: f64) -> Result<Var> {
        let a = T::lit(slope);
        let out = self
            .value(x)
            .map(|v| if v > T::zero() { v } else { a * v });
        self.push(Op::LeakyRelu(x, a), out)
    }

    pub fn tanh(&mut self, x: Var) -> Result<Var> {
        let out = self.value(x).map(|v| v.tanh());
        self.push(Op::Tanh(x), out)
    }

    /// `x / (1 + |x|)`.
    pub fn softsign(&mut self, x: Var) -> Result<Var> {
        let out = self.value(x).map(|v| v / (T::one() + v.abs()));
        self.push(Op::Softsign(x), out)
    }

    pub fn exp(&mut self, x: Var) -> Result<Var> {
        let out = self.value(x).map(|v| v.exp());
        self.push(Op::Exp(x), out)
    }

    pub fn log(&mut self, x: Var) -> Result<Var> {
        let out = self.value(x).map(|v| v.ln());
        self.push(Op::Log(x), out)
    }

    pub fn square(&mut self, x: Var) -> Result<Var> {
        let out = self.value(x).map(|v| v * v);
        self.push(Op::Square(x), out)
    }

    /// Square root; negative inputs are clamped to zero and the derivative
    /// uses `max(x, 1e-12)` so coincident points keep finite gradients.
    pub fn sqrt(&mut self, x: Var) -> Result<Var> {
        let out = self.value(x).map(|v| v.max(T::zero()).sqrt());
        self.push(Op::Sqrt(x), out)
    }

    pub fn recip(&mut self, x: Var) -> Result<Var> {
        let out = self.value(x).map(|v| v.recip());
        self.push(Op::Recip(x), out)
    }

    /// Clamps into `[lo, hi]`; the gradient is zero outside the interval.
    pub fn clamp(&mut self, x: Var, lo: f64, hi: f64) -> Result<Var> {
        let (lo, hi) = (T::lit(lo), T::lit(hi));
        let out = self.value(x).map(|v| v.max(lo).min(hi));
        self.push(Op::Clamp(x, lo, hi), out)
    }

    /// Sum of all entries, as a 1x1 node.
    pub fn sum(&mut self, x: Var) -> Result<Var> {
        let s: f64 = self.value(x).as_slice().iter().map(|v| v.as_f64()).sum();
        self.push(Op::Sum(x), Matrix::scalar(T::lit(s)))
    }

    pub fn mean(&mut self, x: Var) -> Result<Var> {
        let vx = self.value(x);
        if vx.is_empty() {
            return Err(self.shape_err("mean", "empty input".into()));
        }
        let s: f64 = vx.as_slice().iter().map(|v| v.as_f64()).sum();
        let n = vx.len() as f64;
        self.push(Op::Mean(x), Matrix::scalar(T::lit(s / n)))
    }

    /// Per-row sums as an `n x 1` column.
    pub fn sum_rows(&mut self, x: Var) -> Result<Var> {
        let vx = self.value(x);
        let out = Matrix::from_fn(vx.rows(), 1, |i, _| {
            T::lit(vx.row(i).iter().map(|v| v.as_f64()).sum())
        });
        self.push(Op::SumRows(x), out)
    }

    /// Per-column sums as a `1 x c` row.
    pub fn sum_cols(&mut self, x: Var) -> Result<Var> {
        let vx = self.value(x);
        let mut acc = vec![0.0f64; vx.cols()];
        for r in vx.iter_rows() {
            for (a, v) in acc.iter_mut().zip(r) {
                *a += v.as_f64();
            }
        }
        let out = Matrix::from_vec(1, vx.cols(), acc.into_iter().map(T::lit).collect())?;
        self.push(Op::SumCols(x), out)
    }

    /// Row-wise `log(sum(exp(x)))`, numerically stabilized; `n x 1`.
    pub fn logsumexp_rows(&mut self, x: Var) -> Result<Var> {
        let vx = self.value(x);
        if vx.cols() == 0 {
            return Err(self.shape_err("logsumexp_rows", "no columns".into()));
        }
        let out = Matrix::from_fn(vx.rows(), 1, |i, _| T::lit(logsumexp(vx.row(i))));
        self.push(Op::LogSumExpRows(x), out)
    }

    pub fn concat_cols(&mut self, parts: &[Var]) -> Result<Var> {
        if parts.is_empty() {
            return Err(self.shape_err("concat_cols", "no inputs".into()));
        }
        let rows = self.shape(parts[0]).0;
        if let Some(bad) = parts.iter().find(|p| self.shape(**p).0 != rows) {
            return Err(self.shape_err(
                "concat_cols",
                format!("row count {} vs {rows}", self.shape(*bad).0),
            ));
        }
        let cols: usize = parts.iter().map(|p| self.shape(*p).1).sum();
        let mut out = Matrix::zeros(rows, cols);
        for i in 0..rows {
            let mut off = 0;
            for p in parts {
                let r = self.value(*p).row(i);
                out.row_mut(i)[off..off + r.len()].copy_from_slice(r);
                off += r.len();
            }
        }
        self.push(Op::ConcatCols(parts.to_vec()), out)
    }

    /// Columns `start..end` of `x`.
    pub fn slice_cols(&mut self, x: Var, start: usize, end: usize) -> Result<Var> {
        let cols = self.shape(x).1;
        if start > end || end > cols {
            return Err(self.shape_err(
                "slice_cols",
                format!("range {start}..{end} of {cols} columns"),
            ));
        }
        let out = self.value(x).slice_cols(start, end);
        self.push(Op::SliceCols(x, start, end), out)
    }

    /// Splits into consecutive column blocks of the given widths.
    pub fn split_cols(&mut self, x: Var, widths: &[usize]) -> Result<Vec<Var>> {
        let mut out = Vec::with_capacity(widths.len());
        let mut start = 0;
        for &w in widths {
            out.push(self.slice_cols(x, start, start + w)?);
            start += w;
        }
        Ok(out)
    }

    pub fn transpose(&mut self, x: Var) -> Result<Var> {
        let out = self.value(x).transpose();
        self.push(Op::Transpose(x), out)
    }

    /// Squared Euclidean distances between all pairs of rows (`n x n`).
    pub fn pairwise_sqdist(&mut self, x: Var) -> Result<Var> {
        let out = pairwise_sqdist(self.value(x));
        self.push(Op::PairwiseSqDist(x), out)
    }

    /// Picks `x[i, j]` for each listed index pair; `m x 1` column.
    pub fn gather(&mut self, x: Var, idx: Arc<[(usize, usize)]>) -> Result<Var> {
        let vx = self.value(x);
        if let Some(&(i, j)) = idx.iter().find(|&&(i, j)| i >= vx.rows() || j >= vx.cols()) {
            return Err(self.shape_err(
                "gather",
                format!("index ({i}, {j}) outside {:?}", vx.shape()),
            ));
        }
        let out = Matrix::from_fn(idx.len(), 1, |e, _| vx[idx[e]]);
        self.push(Op::Gather(x, idx), out)
    }

    /// Copy of a square matrix with the diagonal set to zero.
    pub fn zero_diag(&mut self, x: Var) -> Result<Var> {
        let vx = self.value(x);
        if vx.rows() != vx.cols() {
            return Err(self.shape_err("zero_diag", format!("{:?} not square", vx.shape())));
        }
        let mut out = vx.clone();
        for i in 0..out.rows() {
            out[(i, i)] = T::zero();
        }
        self.push(Op::ZeroDiag(x), out)
    }

    /// Reverse sweep from a scalar output.
    pub fn backward(&self, output: Var) -> Result<Adjoints<T>> {
        let (r, c) = self.shape(output);
        if (r, c) != (1, 1) {
            return Err(Error::NotScalar {
                node: output.0,
                rows: r,
                cols: c,
            });
        }
        let mut adj: Vec<Option<Matrix<T>>> = Vec::new();
        adj.resize_with(output.0 + 1, || None);
        adj[output.0] = Some(Matrix::scalar(T::one()));

        for id in (0..=output.0).rev() {
            let Some(g) = adj[id].take() else { continue };
            let node = &self.nodes[id];
            if node.needs_grad {
                self.propagate(&node.op, &node.value, &g, &mut adj)?;
            }
            adj[id] = Some(g);
        }
        Ok(Adjoints { adj })
    }

    /// Runs `backward` and adds the parameter adjoints into `store`.
    pub fn backward_into(&self, output: Var, store: &mut ParamStore<T>) -> Result<()> {
        let adj = self.backward(output)?;
        adj.accumulate_params(self, store);
        Ok(())
    }

    fn wants(&self, v: Var) -> bool {
        self.nodes[v.0].needs_grad
    }

    fn propagate(
        &self,
        op: &Op<T>,
        y: &Matrix<T>,
        g: &Matrix<T>,
        adj: &mut [Option<Matrix<T>>],
    ) -> Result<()> {
        let val = |v: Var| &self.nodes[v.0].value;
        let unary = |a: Var, adj: &mut [Option<Matrix<T>>], f: &dyn Fn(T, T, T) -> T| {
            // f(g, x, y)
            if self.wants(a) {
                let x = val(a);
                let mut out = g.clone();
                for ((o, &xv), &yv) in out.as_mut_slice().iter_mut().zip(x.as_slice()).zip(y.as_slice()) {
                    *o = f(*o, xv, yv);
                }
                accumulate(adj, a, out);
            }
        };
        match op {
            Op::Leaf | Op::Param(_) => {}
            Op::MatMul(a, b) => {
                if self.wants(*a) {
                    accumulate(adj, *a, g.matmul_t(false, val(*b), true)?);
                }
                if self.wants(*b) {
                    accumulate(adj, *b, val(*a).matmul_t(true, g, false)?);
                }
            }
            Op::Add(a, b) => {
                if self.wants(*a) {
                    accumulate(adj, *a, g.clone());
                }
                if self.wants(*b) {
                    accumulate(adj, *b, g.clone());
                }
            }
            Op::Sub(a, b) => {
                if self.wants(*a) {
                    accumulate(adj, *a, g.clone());
                }
                if self.wants(*b) {
                    accumulate(adj, *b, g.map(|v| -v));
                }
            }
            Op::Mul(a, b) => {
                if self.wants(*a) {
                    accumulate(adj, *a, g.zip_map(val(*b), |u, v| u * v));
                }
                if self.wants(*b) {
                    accumulate(adj, *b, g.zip_map(val(*a), |u, v| u * v));
                }
            }
            Op::AddRow(x, r) => {
                if self.wants(*x) {
                    accumulate(adj, *x, g.clone());
                }
                if self.wants(*r) {
                    let mut s = Matrix::zeros(1, g.cols());
                    for row in g.iter_rows() {
                        for (a, &v) in s.as_mut_slice().iter_mut().zip(row) {
                            *a += v;
                        }
                    }
                    accumulate(adj, *r, s);
                }
            }
            Op::MulRow(x, r) => {
                let vr = val(*r);
                let c = vr.cols();
                if self.wants(*x) {
                    let mut gx = g.clone();
                    for (k, v) in gx.as_mut_slice().iter_mut().enumerate() {
                        *v *= vr.as_slice()[k % c];
                    }
                    accumulate(adj, *x, gx);
                }
                if self.wants(*r) {
                    let vx = val(*x);
                    let mut s = Matrix::zeros(1, c);
                    for (gr, xr) in g.iter_rows().zip(vx.iter_rows()) {
                        for ((a, &u), &v) in s.as_mut_slice().iter_mut().zip(gr).zip(xr) {
                            *a += u * v;
                        }
                    }
                    accumulate(adj, *r, s);
                }
            }
            Op::SubOuter(c, r) => {
                if self.wants(*c) {
                    let gc = Matrix::from_fn(g.rows(), 1, |i, _| g.row(i).iter().copied().sum());
                    accumulate(adj, *c, gc);
                }
                if self.wants(*r) {
                    let mut s = Matrix::zeros(1, g.cols());
                    for row in g.iter_rows() {
                        for (a, &v) in s.as_mut_slice().iter_mut().zip(row) {
                            *a -= v;
                        }
                    }
                    accumulate(adj, *r, s);
                }
            }
            Op::DivCol(x, c) => {
                let vc = val(*c);
                if self.wants(*x) {
                    let mut gx = g.clone();
                    for i in 0..gx.rows() {
                        let d = vc[(i, 0)];
                        gx.row_mut(i).iter_mut().for_each(|v| *v /= d);
                    }
                    accumulate(adj, *x, gx);
                }
                if self.wants(*c) {
                    let vx = val(*x);
                    let gc = Matrix::from_fn(vc.rows(), 1, |i, _| {
                        let d = vc[(i, 0)];
                        let s: T = g.row(i).iter().zip(vx.row(i)).map(|(&a, &b)| a * b).sum();
                        -s / (d * d)
                    });
                    accumulate(adj, *c, gc);
                }
            }
            Op::MulScalar(x, s) => {
                let sv = val(*s).item();
                if self.wants(*x) {
                    accumulate(adj, *x, g.map(|v| v * sv));
                }
                if self.wants(*s) {
                    let d: f64 = g
                        .as_slice()
                        .iter()
                        .zip(val(*x).as_slice())
                        .map(|(a, b)| a.as_f64() * b.as_f64())
                        .sum();
                    accumulate(adj, *s, Matrix::scalar(T::lit(d)));
                }
            }
            Op::Scale(x, c) => {
                if self.wants(*x) {
                    let c = *c;
                    accumulate(adj, *x, g.map(|v| v * c));
                }
            }
            Op::Offset(x, _) => {
                if self.wants(*x) {
                    accumulate(adj, *x, g.clone());
                }
            }
            Op::Relu(x) => unary(*x, adj, &|g, x, _| if x > T::zero() { g } else { T::zero() }),
            Op::LeakyRelu(x, a) => {
                let a = *a;
                unary(*x, adj, &move |g, x, _| if x > T::zero() { g } else { a * g })
            }
            Op::Tanh(x) => unary(*x, adj, &|g, _, y| g * (T::one() - y * y)),
            Op::Softsign(x) => unary(*x, adj, &|g, x, _| {
                let d = T::one() + x.abs();
                g / (d * d)
            }),
            Op::Exp(x) => unary(*x, adj, &|g, _, y| g * y),
            Op::Log(x) => unary(*x, adj, &|g, x, _| g / x),
            Op::Square(x) => unary(*x, adj, &|g, x, _| T::lit(2.0) * x * g),
            Op::Sqrt(x) => unary(*x, adj, &|g, x, _| {
                g * T::lit(0.5) / x.max(T::lit(SQRT_EPS)).sqrt()
            }),
            Op::Recip(x) => unary(*x, adj, &|g, _, y| -g * y * y),
            Op::Clamp(x, lo, hi) => {
                let (lo, hi) = (*lo, *hi);
                unary(*x, adj, &move |g, x, _| {
                    if x >= lo && x <= hi {
                        g
                    } else {
                        T::zero()
                    }
                })
            }
            Op::Sum(x) => {
                if self.wants(*x) {
                    let (r, c) = val(*x).shape();
                    accumulate(adj, *x, Matrix::filled(r, c, g.item()));
                }
            }
            Op::Mean(x) => {
                if self.wants(*x) {
                    let (r, c) = val(*x).shape();
                    let v = g.item() / T::lit((r * c) as f64);
                    accumulate(adj, *x, Matrix::filled(r, c, v));
                }
            }
            Op::SumRows(x) => {
                if self.wants(*x) {
                    let (r, c) = val(*x).shape();
                    accumulate(adj, *x, Matrix::from_fn(r, c, |i, _| g[(i, 0)]));
                }
            }
            Op::SumCols(x) => {
                if self.wants(*x) {
                    let (r, c) = val(*x).shape();
                    accumulate(adj, *x, Matrix::from_fn(r, c, |_, j| g[(0, j)]));
                }
            }
            Op::LogSumExpRows(x) => {
                if self.wants(*x) {
                    let vx = val(*x);
                    let gx = Matrix::from_fn(vx.rows(), vx.cols(), |i, j| {
                        g[(i, 0)] * (vx[(i, j)] - y[(i, 0)]).exp()
                    });
                    accumulate(adj, *x, gx);
                }
            }
            Op::ConcatCols(parts) => {
                let mut off = 0;
                for p in parts {
                    let w = val(*p).cols();
                    if self.wants(*p) {
                        accumulate(adj, *p, g.slice_cols(off, off + w));
                    }
                    off += w;
                }
            }
            Op::SliceCols(x, start, end) => {
                if self.wants(*x) {
                    let (r, c) = val(*x).shape();
                    let mut gx = Matrix::zeros(r, c);
                    for i in 0..r {
                        gx.row_mut(i)[*start..*end].copy_from_slice(g.row(i));
                    }
                    accumulate(adj, *x, gx);
                }
            }
            Op::Transpose(x) => {
                if self.wants(*x) {
                    accumulate(adj, *x, g.transpose());
                }
            }
            Op::PairwiseSqDist(x) => {
                if self.wants(*x) {
                    let vx = val(*x);
                    let (n, d) = vx.shape();
                    let mut gx = Matrix::zeros(n, d);
                    for i in 0..n {
                        let xi = vx.row(i);
                        let mut acc = vec![T::zero(); d];
                        for j in 0..n {
                            let w = g[(i, j)] + g[(j, i)];
                            if w == T::zero() {
                                continue;
                            }
                            let w = T::lit(2.0) * w;
                            for ((a, &u), &v) in acc.iter_mut().zip(xi).zip(vx.row(j)) {
                                *a += w * (u - v);
                            }
                        }
                        gx.row_mut(i).copy_from_slice(&acc);
                    }
                    accumulate(adj, *x, gx);
                }
            }
            Op::Gather(x, idx) => {
                if self.wants(*x) {
                    let (r, c) = val(*x).shape();
                    let mut gx = Matrix::zeros(r, c);
                    for (e, &(i, j)) in idx.iter().enumerate() {
                        gx[(i, j)] += g[(e, 0)];
                    }
                    accumulate(adj, *x, gx);
                }
            }
            Op::ZeroDiag(x) => {
                if self.wants(*x) {
                    let mut gx = g.clone();
                    for i in 0..gx.rows() {
                        gx[(i, i)] = T::zero();
                    }
                    accumulate(adj, *x, gx);
                }
            }
        }
        Ok(())
    }
}

fn accumulate<T: Real>(adj: &mut [Option<Matrix<T>>], v: Var, g: Matrix<T>) {
    match &mut adj[v.0] {
        Some(a) => a.add_assign(&g),
        slot @ None => *slot = Some(g),
    }
}

/// Numerically stable `log(sum(exp(xs)))`, accumulated in `f64`.
pub fn logsumexp<T: Real>(xs: &[T]) -> f64 {
    let m = xs.iter().fold(f64::NEG_INFINITY, |m, v| m.max(v.as_f64()));
    if m == f64::NEG_INFINITY {
        return m;
    }
    m + xs.iter().map(|v| (v.as_f64() - m).exp()).sum::<f64>().ln()
}

/// Squared Euclidean distances between rows, accumulated in `f64`.
///
/// Symmetric with an exactly zero diagonal.
pub fn pairwise_sqdist<T: Real>(x: &Matrix<T>) -> Matrix<T> {
    let n = x.rows();
    let mut out = Matrix::zeros(n, n);
    for i in 0..n {
        let xi = x.row(i);
        for j in (i + 1)..n {
            let s: f64 = xi
                .iter()
                .zip(x.row(j))
                .map(|(a, b)| {
                    let d = a.as_f64() - b.as_f64();
                    d * d
                })
                .sum();
            let s = T::lit(s);
            out[(i, j)] = s;
            out[(j, i)] = s;
        }
    }
    out
}

/// Result of a reverse sweep.
pub struct Adjoints<T: Real> {
    adj: Vec<Option<Matrix<T>>>,
}

impl<T: Real> Adjoints<T> {
    /// Adjoint of `v`, or `None` when `v` does not influence the output.
    pub fn get(&self, v: Var) -> Option<&Matrix<T>> {
        self.adj.get(v.0).and_then(|a| a.as_ref())
    }

    /// Adjoint of `v` with unreached nodes reported as zeros of the right shape.
    pub fn get_or_zeros(&self, tape: &Tape<T>, v: Var) -> Matrix<T> {
        self.get(v).cloned().unwrap_or_else(|| {
            let (r, c) = tape.shape(v);
            Matrix::zeros(r, c)
        })
    }

    /// Adds every parameter node's adjoint into the matching gradient slot.
    pub fn accumulate_params(&self, tape: &Tape<T>, store: &mut ParamStore<T>) {
        for (id, node) in tape.nodes.iter().enumerate() {
            if let Op::Param(pid) = node.op {
                if let Some(Some(a)) = self.adj.get(id) {
                    store.get_mut(pid).grad.add_assign(a);
                }
            }
        }
    }
}
