use std::sync::Arc;

use super::tensor::{matmul_nn, matmul_nt, matmul_tn, Tensor};
use crate::error::{Error, Result};
use crate::sparse::SparseMatrix;

/// Constant sparse operand in compressed-row form.
#[derive(Debug, Clone, PartialEq)]
pub struct SparseOperand {
    pub n_rows: usize,
    pub n_cols: usize,
    row_ptr: Vec<usize>,
    col_idx: Vec<usize>,
    values: Vec<f64>,
}

impl SparseOperand {
    pub fn from_coo(m: &SparseMatrix) -> Self {
        let mut m = m.clone();
        m.compress();
        let mut row_ptr = vec![0; m.n_rows + 1];
        for &(r, _, _) in &m.entries {
            row_ptr[r + 1] += 1;
        }
        for i in 0..m.n_rows {
            row_ptr[i + 1] += row_ptr[i];
        }
        Self {
            n_rows: m.n_rows,
            n_cols: m.n_cols,
            row_ptr,
            col_idx: m.entries.iter().map(|e| e.1).collect(),
            values: m.entries.iter().map(|e| e.2).collect(),
        }
    }

    fn row(&self, i: usize) -> impl Iterator<Item = (usize, f64)> + '_ {
        let span = self.row_ptr[i]..self.row_ptr[i + 1];
        self.col_idx[span.clone()].iter().copied().zip(self.values[span].iter().copied())
    }
}

/// Handle to a node on a [`Tape`].
#[derive(Debug, Clone, Copy, PartialEq, Eq, Hash)]
pub struct Var(pub(crate) usize);

#[derive(Debug, Clone)]
enum Op {
    Leaf,
    MatMul(usize, usize),
    Add(usize, usize),
    Sub(usize, usize),
    Mul(usize, usize),
    Scale(usize, f64),
    AddScalar(usize),
    Relu(usize),
    Sigmoid(usize),
    Exp(usize),
    Sin(usize),
    Cos(usize),
    Square(usize),
    SmoothAbs(usize),
    ClampMax(usize, f64),
    Sum(usize),
    Mean(usize),
    RowSum(usize),
    Concat(Vec<usize>),
    Slice(usize, usize),
    SpMM(usize, Arc<SparseOperand>),
    Detach,
}

#[derive(Debug, Clone)]
struct Node {
    op: Op,
    value: Tensor,
}

/// Append-only record of a forward computation.
#[derive(Debug, Clone, Default)]
pub struct Tape {
    nodes: Vec<Node>,
}

/// Adjoints produced by [`Tape::backward`].
#[derive(Debug, Clone)]
pub struct Gradients {
    adj: Vec<Option<Tensor>>,
}

impl Gradients {
    /// Adjoint of `v`, or `None` when no path from the root reaches it.
    pub fn get(&self, v: Var) -> Option<&Tensor> {
        self.adj.get(v.0).and_then(Option::as_ref)
    }

    /// Adjoint of `v` with zeros for unreached nodes.
    pub fn get_or_zeros(&self, v: Var, shape: (usize, usize)) -> Tensor {
        self.get(v).cloned().unwrap_or_else(|| Tensor::zeros(shape.0, shape.1))
    }
}

#[derive(Clone, Copy)]
enum Bcast {
    Same,
    Row,
    Col,
    Scalar,
}

fn bcast(op: &'static str, a: &Tensor, b: &Tensor) -> Result<Bcast> {
    match b.shape() {
        s if s == a.shape() => Ok(Bcast::Same),
        (1, 1) => Ok(Bcast::Scalar),
        (1, c) if c == a.cols => Ok(Bcast::Row),
        (r, 1) if r == a.rows => Ok(Bcast::Col),
        (r, c) => Err(Error::Shape {
            op,
            detail: format!("{}x{} with {r}x{c}", a.rows, a.cols),
        }),
    }
}

fn bidx(kind: Bcast, cols: usize, i: usize) -> usize {
    match kind {
        Bcast::Same => i,
        Bcast::Row => i % cols,
        Bcast::Col => i / cols,
        Bcast::Scalar => 0,
    }
}

fn map(a: &Tensor, f: impl Fn(f64) -> f64) -> Tensor {
    Tensor { rows: a.rows, cols: a.cols, data: a.data.iter().map(|&v| f(v)).collect() }
}

fn zip_map(a: &Tensor, b: &[f64], f: impl Fn(f64, f64) -> f64) -> Tensor {
    Tensor { rows: a.rows, cols: a.cols, data: a.data.iter().zip(b).map(|(&x, &y)| f(x, y)).collect() }
}

fn accumulate(slot: &mut Option<Tensor>, t: Tensor) {
    match slot {
        Some(acc) => acc.data.iter_mut().zip(&t.data).for_each(|(a, b)| *a += b),
        None => *slot = Some(t),
    }
}

/// Reduces an adjoint of `a`'s shape down to a broadcast operand's shape.
fn reduce_to(kind: Bcast, g: &Tensor, rows: usize, cols: usize) -> Tensor {
    match kind {
        Bcast::Same => g.clone(),
        _ => {
            let mut out = Tensor::zeros(rows, cols);
            for (i, &v) in g.data.iter().enumerate() {
                out.data[bidx(kind, g.cols, i)] += v;
            }
            out
        }
    }
}

impl Tape {
    pub fn new() -> Self {
        Self::default()
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

    fn push(&mut self, op: Op, value: Tensor, name: &'static str) -> Result<Var> {
        if !value.is_finite() {
            return Err(Error::NonFinite(format!("{name} produced a non-finite value")));
        }
        self.nodes.push(Node { op, value });
        Ok(Var(self.nodes.len() - 1))
    }

    /// Input or parameter node.
    pub fn leaf(&mut self, t: Tensor) -> Var {
        self.nodes.push(Node { op: Op::Leaf, value: t });
        Var(self.nodes.len() - 1)
    }

    pub fn matmul(&mut self, a: Var, b: Var) -> Result<Var> {
        let (x, y) = (self.value(a), self.value(b));
        if x.cols != y.rows {
            return Err(Error::Shape {
                op: "matmul",
                detail: format!("{}x{} by {}x{}", x.rows, x.cols, y.rows, y.cols),
            });
        }
        let out = matmul_nn(x, y);
        self.push(Op::MatMul(a.0, b.0), out, "matmul")
    }

    fn binary(&mut self, a: Var, b: Var, name: &'static str, f: fn(f64, f64) -> f64) -> Result<(Tensor, Bcast)> {
        let (x, y) = (self.value(a), self.value(b));
        let kind = bcast(name, x, y)?;
        let data = x.data.iter().enumerate().map(|(i, &v)| f(v, y.data[bidx(kind, x.cols, i)])).collect();
        Ok((Tensor { rows: x.rows, cols: x.cols, data }, kind))
    }

    /// `a + b`, with `b` the same shape as `a`, a row, a column or a scalar.
    pub fn add(&mut self, a: Var, b: Var) -> Result<Var> {
        let (t, _) = self.binary(a, b, "add", |x, y| x + y)?;
        self.push(Op::Add(a.0, b.0), t, "add")
    }

    pub fn sub(&mut self, a: Var, b: Var) -> Result<Var> {
        let (t, _) = self.binary(a, b, "sub", |x, y| x - y)?;
        self.push(Op::Sub(a.0, b.0), t, "sub")
    }

    /// Elementwise product with the same broadcasting as [`Tape::add`].
    pub fn mul(&mut self, a: Var, b: Var) -> Result<Var> {
        let (t, _) = self.binary(a, b, "mul", |x, y| x * y)?;
        self.push(Op::Mul(a.0, b.0), t, "mul")
    }

    pub fn scale(&mut self, a: Var, s: f64) -> Result<Var> {
        let t = map(self.value(a), |v| v * s);
        self.push(Op::Scale(a.0, s), t, "scale")
    }

    pub fn add_scalar(&mut self, a: Var, s: f64) -> Result<Var> {
        let t = map(self.value(a), |v| v + s);
        self.push(Op::AddScalar(a.0), t, "add_scalar")
    }

    pub fn relu(&mut self, a: Var) -> Result<Var> {
        let t = map(self.value(a), |v| v.max(0.0));
        self.push(Op::Relu(a.0), t, "relu")
    }

    pub fn sigmoid(&mut self, a: Var) -> Result<Var> {
        let t = map(self.value(a), |v| 1.0 / (1.0 + (-v).exp()));
        self.push(Op::Sigmoid(a.0), t, "sigmoid")
    }

    pub fn exp(&mut self, a: Var) -> Result<Var> {
        let t = map(self.value(a), f64::exp);
        self.push(Op::Exp(a.0), t, "exp")
    }

    pub fn sin(&mut self, a: Var) -> Result<Var> {
        let t = map(self.value(a), f64::sin);
        self.push(Op::Sin(a.0), t, "sin")
    }

    pub fn cos(&mut self, a: Var) -> Result<Var> {
        let t = map(self.value(a), f64::cos);
        self.push(Op::Cos(a.0), t, "cos")
    }

    pub fn square(&mut self, a: Var) -> Result<Var> {
        let t = map(self.value(a), |v| v * v);
        self.push(Op::Square(a.0), t, "square")
    }

    /// `sqrt(v² + ε²)`
    pub fn smooth_abs(&mut self, a: Var, eps: f64) -> Result<Var> {
        let t = map(self.value(a), |v| v.hypot(eps));
        self.push(Op::SmoothAbs(a.0), t, "smooth_abs")
    }

    /// `min(v, c)`; clipped entries pass no gradient.
    pub fn clamp_max(&mut self, a: Var, c: f64) -> Result<Var> {
        let t = map(self.value(a), |v| v.min(c));
        self.push(Op::ClampMax(a.0, c), t, "clamp_max")
    }

    pub fn sum(&mut self, a: Var) -> Result<Var> {
        let t = Tensor::scalar(self.value(a).data.iter().sum());
        self.push(Op::Sum(a.0), t, "sum")
    }

    pub fn mean(&mut self, a: Var) -> Result<Var> {
        let x = self.value(a);
        if x.is_empty() {
            return Err(Error::Shape { op: "mean", detail: "empty tensor".into() });
        }
        let t = Tensor::scalar(x.data.iter().sum::<f64>() / x.len() as f64);
        self.push(Op::Mean(a.0), t, "mean")
    }

    /// Sums each row into an `r × 1` column.
    pub fn row_sum(&mut self, a: Var) -> Result<Var> {
        let x = self.value(a);
        let data = (0..x.rows).map(|r| x.row_slice(r).iter().sum()).collect();
        let t = Tensor { rows: x.rows, cols: 1, data };
        self.push(Op::RowSum(a.0), t, "row_sum")
    }

    /// Concatenates along columns.
    pub fn concat(&mut self, parts: &[Var]) -> Result<Var> {
        let rows = parts.first().map_or(0, |p| self.value(*p).rows);
        if parts.iter().any(|p| self.value(*p).rows != rows) {
            return Err(Error::Shape { op: "concat", detail: "row counts differ".into() });
        }
        let cols: usize = parts.iter().map(|p| self.value(*p).cols).sum();
        let mut data = Vec::with_capacity(rows * cols);
        for r in 0..rows {
            for p in parts {
                data.extend_from_slice(self.value(*p).row_slice(r));
            }
        }
        let t = Tensor { rows, cols, data };
        self.push(Op::Concat(parts.iter().map(|p| p.0).collect()), t, "concat")
    }

    /// Columns `start .. start + len`.
    pub fn slice(&mut self, a: Var, start: usize, len: usize) -> Result<Var> {
        let x = self.value(a);
        if start + len > x.cols {
            return Err(Error::Shape {
                op: "slice",
                detail: format!("columns {start}..{} of {}", start + len, x.cols),
            });
        }
        let mut data = Vec::with_capacity(x.rows * len);
        for r in 0..x.rows {
            data.extend_from_slice(&x.row_slice(r)[start..start + len]);
        }
        let t = Tensor { rows: x.rows, cols: len, data };
        self.push(Op::Slice(a.0, start), t, "slice")
    }

    /// `a · Sᵀ` for a constant sparse `S`, i.e. `S` applied to every row.
    pub fn spmm(&mut self, a: Var, s: &Arc<SparseOperand>) -> Result<Var> {
        let x = self.value(a);
        if x.cols != s.n_cols {
            return Err(Error::Shape {
                op: "spmm",
                detail: format!("{} columns against operand with {}", x.cols, s.n_cols),
            });
        }
        let mut t = Tensor::zeros(x.rows, s.n_rows);
        for b in 0..x.rows {
            let xr = x.row_slice(b);
            for i in 0..s.n_rows {
                t.data[b * s.n_rows + i] = s.row(i).map(|(j, v)| v * xr[j]).sum();
            }
        }
        self.push(Op::SpMM(a.0, Arc::clone(s)), t, "spmm")
    }

    /// Copy of `a` through which no adjoint flows.
    pub fn detach(&mut self, a: Var) -> Var {
        let t = self.value(a).clone();
        self.nodes.push(Node { op: Op::Detach, value: t });
        Var(self.nodes.len() - 1)
    }

    /// Reverse sweep from a scalar root.
    pub fn backward(&self, root: Var) -> Result<Gradients> {
        if self.value(root).shape() != (1, 1) {
            let (r, c) = self.value(root).shape();
            return Err(Error::Shape { op: "backward", detail: format!("root is {r}x{c}, not scalar") });
        }
        let mut adj: Vec<Option<Tensor>> = vec![None; self.nodes.len()];
        adj[root.0] = Some(Tensor::scalar(1.0));
        for id in (0..=root.0).rev() {
            let Some(g) = adj[id].clone() else { continue };
            let node = &self.nodes[id];
            let out = &node.value;
            let val = |i: usize| &self.nodes[i].value;
            match &node.op {
                Op::Leaf | Op::Detach => {}
                Op::MatMul(a, b) => {
                    let ga = matmul_nt(&g, val(*b));
                    let gb = matmul_tn(val(*a), &g);
                    accumulate(&mut adj[*a], ga);
                    accumulate(&mut adj[*b], gb);
                }
                Op::Add(a, b) | Op::Sub(a, b) => {
                    let sign = if matches!(node.op, Op::Sub(..)) { -1.0 } else { 1.0 };
                    let (x, y) = (val(*a), val(*b));
                    let kind = bcast("add", x, y)?;
                    let mut gb = reduce_to(kind, &g, y.rows, y.cols);
                    gb.data.iter_mut().for_each(|v| *v *= sign);
                    accumulate(&mut adj[*a], g.clone());
                    accumulate(&mut adj[*b], gb);
                }
                Op::Mul(a, b) => {
                    let (x, y) = (val(*a), val(*b));
                    let kind = bcast("mul", x, y)?;
                    let ga_data = g.data.iter().enumerate().map(|(i, &d)| d * y.data[bidx(kind, x.cols, i)]).collect();
                    let gxy = zip_map(&g, &x.data, |d, v| d * v);
                    let gb = reduce_to(kind, &gxy, y.rows, y.cols);
                    accumulate(&mut adj[*a], Tensor { rows: x.rows, cols: x.cols, data: ga_data });
                    accumulate(&mut adj[*b], gb);
                }
                Op::Scale(a, s) => accumulate(&mut adj[*a], map(&g, |d| d * s)),
                Op::AddScalar(a) => accumulate(&mut adj[*a], g),
                Op::Relu(a) => {
                    let t = zip_map(&g, &val(*a).data, |d, x| if x > 0.0 { d } else { 0.0 });
                    accumulate(&mut adj[*a], t);
                }
                Op::Sigmoid(a) => accumulate(&mut adj[*a], zip_map(&g, &out.data, |d, s| d * s * (1.0 - s))),
                Op::Exp(a) => accumulate(&mut adj[*a], zip_map(&g, &out.data, |d, e| d * e)),
                Op::Sin(a) => accumulate(&mut adj[*a], zip_map(&g, &val(*a).data, |d, x| d * x.cos())),
                Op::Cos(a) => accumulate(&mut adj[*a], zip_map(&g, &val(*a).data, |d, x| -d * x.sin())),
                Op::Square(a) => accumulate(&mut adj[*a], zip_map(&g, &val(*a).data, |d, x| 2.0 * d * x)),
                Op::SmoothAbs(a) => {
                    let x = &val(*a).data;
                    let data = g.data.iter().zip(x).zip(&out.data).map(|((d, x), s)| d * x / s).collect();
                    accumulate(&mut adj[*a], Tensor { rows: g.rows, cols: g.cols, data });
                }
                Op::ClampMax(a, c) => {
                    let t = zip_map(&g, &val(*a).data, |d, x| if x < *c { d } else { 0.0 });
                    accumulate(&mut adj[*a], t);
                }
                Op::Sum(a) | Op::Mean(a) => {
                    let x = val(*a);
                    let d = if matches!(node.op, Op::Mean(_)) { g.item() / x.len() as f64 } else { g.item() };
                    accumulate(&mut adj[*a], Tensor::full(x.rows, x.cols, d));
                }
                Op::RowSum(a) => {
                    let x = val(*a);
                    let data = (0..x.len()).map(|i| g.data[i / x.cols]).collect();
                    accumulate(&mut adj[*a], Tensor { rows: x.rows, cols: x.cols, data });
                }
                Op::Concat(parts) => {
                    let mut off = 0;
                    for &p in parts {
                        let c = val(p).cols;
                        let mut data = Vec::with_capacity(g.rows * c);
                        for r in 0..g.rows {
                            data.extend_from_slice(&g.row_slice(r)[off..off + c]);
                        }
                        accumulate(&mut adj[p], Tensor { rows: g.rows, cols: c, data });
                        off += c;
                    }
                }
                Op::Slice(a, start) => {
                    let x = val(*a);
                    let mut t = Tensor::zeros(x.rows, x.cols);
                    for r in 0..x.rows {
                        t.data[r * x.cols + start..r * x.cols + start + g.cols].copy_from_slice(g.row_slice(r));
                    }
                    accumulate(&mut adj[*a], t);
                }
                Op::SpMM(a, s) => {
                    let x = val(*a);
                    let mut t = Tensor::zeros(x.rows, x.cols);
                    for b in 0..x.rows {
                        let gr = g.row_slice(b);
                        let tr = &mut t.data[b * x.cols..(b + 1) * x.cols];
                        for (i, &gi) in gr.iter().enumerate() {
                            if gi != 0.0 {
                                for (j, v) in s.row(i) {
                                    tr[j] += v * gi;
                                }
                            }
                        }
                    }
                    accumulate(&mut adj[*a], t);
                }
            }
        }
        Ok(Gradients { adj })
    }
}
