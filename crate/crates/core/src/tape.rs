//! Tape-based reverse-mode automatic differentiation.
//!
//! A `Tape` records primitive applications in execution order (inputs always
//! precede consumers), holding each node's forward value plus whatever the
//! backward rule needs. `backward` replays the records once in reverse and
//! accumulates vector-Jacobian products. Tapes are built per forward pass and
//! dropped after backward; there is no persistent graph.
//!
//! Conventions, deliberately narrow:
//! - rank 1 and 2 tensors only; a rank-1 tensor acts as a single row where a
//!   row-wise op needs one;
//! - the only broadcasts are `add_row` / `mul_row` (matrix op row vector);
//!   everything else requires exact shape equality;
//! - every op validates that its output is finite and fails with a numeric
//!   error otherwise (NaN/Inf is an error state, never data).

use crate::error::{Error, Result};
use crate::tensor::{matmul_nn, matmul_nt, matmul_tn, Tensor};

#[derive(Debug, Clone, Copy, PartialEq, Eq)]
pub struct NodeId(usize);

#[derive(Debug)]
enum Op {
    Leaf,
    Add(NodeId, NodeId),
    /// matrix + row vector, broadcast over rows
    AddRow(NodeId, NodeId),
    /// matrix * row vector, broadcast over rows
    MulRow(NodeId, NodeId),
    Sub(NodeId, NodeId),
    Mul(NodeId, NodeId),
    /// x * mul + add (constants)
    Affine { x: NodeId, mul: f64, add: f64 },
    Matmul(NodeId, NodeId),
    /// a * b^T
    MatmulNT(NodeId, NodeId),
    Concat { axis: usize, parts: Vec<NodeId> },
    Slice { x: NodeId, axis: usize, start: usize, len: usize },
    Reshape(NodeId),
    Sigmoid(NodeId),
    Tanh(NodeId),
    Exp(NodeId),
    Log(NodeId),
    Square(NodeId),
    Clamp { x: NodeId, lo: f64, hi: f64 },
    /// row-wise
    Softmax(NodeId),
    /// row-wise
    LogSoftmax(NodeId),
    /// row-wise reduction to one column
    LogSumExp(NodeId),
    /// row-wise normalization; saves per-row mean and 1/std
    LayerNorm { x: NodeId, mean: Vec<f64>, inv_std: Vec<f64> },
    Sum(NodeId),
    Mean(NodeId),
    /// mean squared error between two same-shape tensors
    Mse(NodeId, NodeId),
}

struct Node {
    value: Tensor,
    op: Op,
}

#[derive(Default)]
pub struct Tape {
    nodes: Vec<Node>,
}

/// Gradients of one backward pass, indexed by node id.
pub struct Gradients {
    grads: Vec<Option<Tensor>>,
}

impl Gradients {
    pub fn get(&self, id: NodeId) -> Option<&Tensor> {
        self.grads[id.0].as_ref()
    }

    pub fn take(&mut self, id: NodeId) -> Option<Tensor> {
        self.grads[id.0].take()
    }
}

impl Tape {
    pub fn new() -> Tape {
        Tape::default()
    }

    pub fn len(&self) -> usize {
        self.nodes.len()
    }

    pub fn is_empty(&self) -> bool {
        self.nodes.is_empty()
    }

    pub fn value(&self, id: NodeId) -> &Tensor {
        &self.nodes[id.0].value
    }

    pub fn leaf(&mut self, value: Tensor) -> NodeId {
        self.push_unchecked(value, Op::Leaf)
    }

    pub fn scalar(&mut self, value: f64) -> NodeId {
        self.leaf(Tensor::scalar(value))
    }

    fn push_unchecked(&mut self, value: Tensor, op: Op) -> NodeId {
        self.nodes.push(Node { value, op });
        NodeId(self.nodes.len() - 1)
    }

    fn push(&mut self, name: &'static str, value: Tensor, op: Op) -> Result<NodeId> {
        if !value.all_finite() {
            return Err(Error::Numeric(format!("non-finite output of {name}")));
        }
        Ok(self.push_unchecked(value, op))
    }

    pub fn add(&mut self, a: NodeId, b: NodeId) -> Result<NodeId> {
        let v = self.value(a).zip(self.value(b), |x, y| x + y).map_err(|_| Error::Shape {
            op: "add",
            detail: format!("{:?} vs {:?}", self.value(a).shape(), self.value(b).shape()),
        })?;
        self.push("add", v, Op::Add(a, b))
    }

    /// `a` (n x c) plus row vector `row` (c), broadcast over rows of `a`.
    pub fn add_row(&mut self, a: NodeId, row: NodeId) -> Result<NodeId> {
        let v = self.broadcast_row("add_row", a, row, |x, y| x + y)?;
        self.push("add_row", v, Op::AddRow(a, row))
    }

    /// `a` (n x c) times row vector `row` (c), broadcast over rows of `a`.
    pub fn mul_row(&mut self, a: NodeId, row: NodeId) -> Result<NodeId> {
        let v = self.broadcast_row("mul_row", a, row, |x, y| x * y)?;
        self.push("mul_row", v, Op::MulRow(a, row))
    }

    fn broadcast_row(
        &self,
        name: &'static str,
        a: NodeId,
        row: NodeId,
        f: impl Fn(f64, f64) -> f64,
    ) -> Result<Tensor> {
        let at = self.value(a);
        let rt = self.value(row);
        let c = at.cols();
        if rt.numel() != c {
            return Err(Error::Shape {
                op: name,
                detail: format!("{:?} vs row {:?}", at.shape(), rt.shape()),
            });
        }
        let rd = rt.data();
        let data = at
            .data()
            .chunks_exact(c)
            .flat_map(|arow| arow.iter().zip(rd).map(|(&x, &y)| f(x, y)))
            .collect();
        Tensor::from_vec(at.shape().to_vec(), data)
    }

    pub fn sub(&mut self, a: NodeId, b: NodeId) -> Result<NodeId> {
        let v = self.value(a).zip(self.value(b), |x, y| x - y).map_err(|_| Error::Shape {
            op: "sub",
            detail: format!("{:?} vs {:?}", self.value(a).shape(), self.value(b).shape()),
        })?;
        self.push("sub", v, Op::Sub(a, b))
    }

    pub fn mul(&mut self, a: NodeId, b: NodeId) -> Result<NodeId> {
        let v = self.value(a).zip(self.value(b), |x, y| x * y).map_err(|_| Error::Shape {
            op: "mul",
            detail: format!("{:?} vs {:?}", self.value(a).shape(), self.value(b).shape()),
        })?;
        self.push("mul", v, Op::Mul(a, b))
    }

    pub fn scale(&mut self, x: NodeId, c: f64) -> Result<NodeId> {
        self.affine(x, c, 0.0)
    }

    /// x * mul + add, elementwise with scalar constants.
    pub fn affine(&mut self, x: NodeId, mul: f64, add: f64) -> Result<NodeId> {
        let v = self.value(x).map(|t| t * mul + add);
        self.push("affine", v, Op::Affine { x, mul, add })
    }

    pub fn matmul(&mut self, a: NodeId, b: NodeId) -> Result<NodeId> {
        let v = matmul_nn(self.value(a), self.value(b))?;
        self.push("matmul", v, Op::Matmul(a, b))
    }

    /// a * b^T; the natural orientation for (batch x in) times (out x in) weights.
    pub fn matmul_nt(&mut self, a: NodeId, b: NodeId) -> Result<NodeId> {
        let v = matmul_nt(self.value(a), self.value(b))?;
        self.push("matmul_nt", v, Op::MatmulNT(a, b))
    }

    pub fn concat(&mut self, axis: usize, parts: &[NodeId]) -> Result<NodeId> {
        if parts.is_empty() {
            return Err(Error::Shape { op: "concat", detail: "no parts".into() });
        }
        let first = self.value(parts[0]);
        let rank = first.shape().len();
        if axis >= rank.max(1) || rank > 2 {
            return Err(Error::Shape {
                op: "concat",
                detail: format!("axis {axis} on rank-{rank} tensor"),
            });
        }
        let v = if rank == 1 || axis == 0 {
            // contiguous stacking; all parts share the non-axis extent
            let cols = if rank == 2 { first.cols() } else { 0 };
            let mut data = Vec::new();
            let mut rows = 0;
            for &p in parts {
                let t = self.value(p);
                if rank == 2 && t.cols() != cols {
                    return Err(Error::Shape {
                        op: "concat",
                        detail: format!("cols {} vs {}", t.cols(), cols),
                    });
                }
                rows += t.rows();
                data.extend_from_slice(t.data());
            }
            if rank == 1 {
                Tensor::from_vec(vec![data.len()], data)?
            } else {
                Tensor::from_vec(vec![rows, cols], data)?
            }
        } else {
            let rows = first.rows();
            let mut cols = 0;
            for &p in parts {
                let t = self.value(p);
                if t.rows() != rows {
                    return Err(Error::Shape {
                        op: "concat",
                        detail: format!("rows {} vs {}", t.rows(), rows),
                    });
                }
                cols += t.cols();
            }
            let mut data = Vec::with_capacity(rows * cols);
            for r in 0..rows {
                for &p in parts {
                    data.extend_from_slice(self.value(p).row(r));
                }
            }
            Tensor::from_vec(vec![rows, cols], data)?
        };
        self.push("concat", v, Op::Concat { axis, parts: parts.to_vec() })
    }

    pub fn slice(&mut self, x: NodeId, axis: usize, start: usize, len: usize) -> Result<NodeId> {
        let t = self.value(x);
        let rank = t.shape().len();
        let extent = if rank == 1 { t.numel() } else { t.shape()[axis.min(rank - 1)] };
        if axis >= rank || start + len > extent {
            return Err(Error::Shape {
                op: "slice",
                detail: format!("axis {axis} range {start}..{} of {:?}", start + len, t.shape()),
            });
        }
        let v = if rank == 1 {
            Tensor::from_vec(vec![len], t.data()[start..start + len].to_vec())?
        } else if axis == 0 {
            let c = t.cols();
            Tensor::from_vec(vec![len, c], t.data()[start * c..(start + len) * c].to_vec())?
        } else {
            let rows = t.rows();
            let mut data = Vec::with_capacity(rows * len);
            for r in 0..rows {
                data.extend_from_slice(&t.row(r)[start..start + len]);
            }
            Tensor::from_vec(vec![rows, len], data)?
        };
        self.push("slice", v, Op::Slice { x, axis, start, len })
    }

    pub fn reshape(&mut self, x: NodeId, shape: Vec<usize>) -> Result<NodeId> {
        let v = self.value(x).clone().reshape(shape)?;
        self.push("reshape", v, Op::Reshape(x))
    }

    pub fn sigmoid(&mut self, x: NodeId) -> Result<NodeId> {
        let v = self.value(x).map(|t| 1.0 / (1.0 + (-t).exp()));
        self.push("sigmoid", v, Op::Sigmoid(x))
    }

    pub fn tanh(&mut self, x: NodeId) -> Result<NodeId> {
        let v = self.value(x).map(f64::tanh);
        self.push("tanh", v, Op::Tanh(x))
    }

    pub fn exp(&mut self, x: NodeId) -> Result<NodeId> {
        let v = self.value(x).map(f64::exp);
        self.push("exp", v, Op::Exp(x))
    }

    pub fn log(&mut self, x: NodeId) -> Result<NodeId> {
        let v = self.value(x).map(f64::ln);
        self.push("log", v, Op::Log(x))
    }

    pub fn square(&mut self, x: NodeId) -> Result<NodeId> {
        let v = self.value(x).map(|t| t * t);
        self.push("square", v, Op::Square(x))
    }

    pub fn clamp(&mut self, x: NodeId, lo: f64, hi: f64) -> Result<NodeId> {
        let v = self.value(x).map(|t| t.clamp(lo, hi));
        self.push("clamp", v, Op::Clamp { x, lo, hi })
    }

    /// Row-wise softmax, computed as exp(x - logsumexp(x)) for stability.
    pub fn softmax(&mut self, x: NodeId) -> Result<NodeId> {
        let v = row_map(self.value(x), softmax_row);
        self.push("softmax", v, Op::Softmax(x))
    }

    pub fn log_softmax(&mut self, x: NodeId) -> Result<NodeId> {
        let v = row_map(self.value(x), |row, out| {
            let lse = logsumexp_slice(row);
            for (o, &r) in out.iter_mut().zip(row) {
                *o = r - lse;
            }
        });
        self.push("log_softmax", v, Op::LogSoftmax(x))
    }

    /// Row-wise log-sum-exp reduction; (n x c) -> (n x 1), rank-1 -> scalar.
    pub fn logsumexp(&mut self, x: NodeId) -> Result<NodeId> {
        let t = self.value(x);
        let rows = t.rows();
        let c = t.cols();
        let mut data = Vec::with_capacity(rows);
        for r in 0..rows {
            data.push(logsumexp_slice(&t.data()[r * c..(r + 1) * c]));
        }
        let shape = if t.shape().len() == 1 { vec![1] } else { vec![rows, 1] };
        let v = Tensor::from_vec(shape, data)?;
        self.push("logsumexp", v, Op::LogSumExp(x))
    }

    /// Row-wise (x - mean) / sqrt(var + eps). Gain/shift are applied by the
    /// caller with `mul_row`/`add_row`.
    pub fn layer_norm(&mut self, x: NodeId, eps: f64) -> Result<NodeId> {
        let t = self.value(x);
        let rows = t.rows();
        let c = t.cols();
        let mut mean = Vec::with_capacity(rows);
        let mut inv_std = Vec::with_capacity(rows);
        let mut data = Vec::with_capacity(rows * c);
        for r in 0..rows {
            let row = &t.data()[r * c..(r + 1) * c];
            let mu = row.iter().sum::<f64>() / c as f64;
            let var = row.iter().map(|&v| (v - mu) * (v - mu)).sum::<f64>() / c as f64;
            let s = 1.0 / (var + eps).sqrt();
            mean.push(mu);
            inv_std.push(s);
            data.extend(row.iter().map(|&v| (v - mu) * s));
        }
        let v = Tensor::from_vec(t.shape().to_vec(), data)?;
        self.push("layer_norm", v, Op::LayerNorm { x, mean, inv_std })
    }

    pub fn sum(&mut self, x: NodeId) -> Result<NodeId> {
        let v = Tensor::scalar(self.value(x).data().iter().sum());
        self.push("sum", v, Op::Sum(x))
    }

    pub fn mean(&mut self, x: NodeId) -> Result<NodeId> {
        let t = self.value(x);
        let v = Tensor::scalar(t.data().iter().sum::<f64>() / t.numel() as f64);
        self.push("mean", v, Op::Mean(x))
    }

    pub fn mse(&mut self, a: NodeId, b: NodeId) -> Result<NodeId> {
        let (at, bt) = (self.value(a), self.value(b));
        if at.shape() != bt.shape() {
            return Err(Error::Shape {
                op: "mse",
                detail: format!("{:?} vs {:?}", at.shape(), bt.shape()),
            });
        }
        let n = at.numel() as f64;
        let v = Tensor::scalar(
            at.data().iter().zip(bt.data()).map(|(&x, &y)| (x - y) * (x - y)).sum::<f64>() / n,
        );
        self.push("mse", v, Op::Mse(a, b))
    }

    /// Reverse sweep from a scalar loss node; returns gradients for every node.
    pub fn backward(&self, loss: NodeId) -> Result<Gradients> {
        if !self.value(loss).is_scalar() {
            return Err(Error::Numeric(format!(
                "backward requires a scalar loss, got shape {:?}",
                self.value(loss).shape()
            )));
        }
        let mut grads: Vec<Option<Tensor>> = vec![None; self.nodes.len()];
        grads[loss.0] = Some(Tensor::scalar(1.0));

        for i in (0..=loss.0).rev() {
            let Some(g) = grads[i].take() else { continue };
            self.step_backward(i, &g, &mut grads)?;
            // leaves keep their gradient; interior grads are dropped once consumed
            if matches!(self.nodes[i].op, Op::Leaf) {
                grads[i] = Some(g);
            }
        }
        Ok(Gradients { grads })
    }

    fn step_backward(&self, i: usize, g: &Tensor, grads: &mut [Option<Tensor>]) -> Result<()> {
        let node = &self.nodes[i];
        match &node.op {
            Op::Leaf => {}
            Op::Add(a, b) => {
                accumulate(grads, *a, g.clone());
                accumulate(grads, *b, g.clone());
            }
            Op::AddRow(a, row) => {
                accumulate(grads, *a, g.clone());
                accumulate(grads, *row, column_sums(g, self.value(*row).shape()));
            }
            Op::MulRow(a, row) => {
                let rt = self.value(*row);
                let at = self.value(*a);
                let c = at.cols();
                let rd = rt.data();
                let da = Tensor::from_vec(
                    at.shape().to_vec(),
                    g.data()
                        .chunks_exact(c)
                        .flat_map(|grow| grow.iter().zip(rd).map(|(&gv, &rv)| gv * rv))
                        .collect(),
                )?;
                let gx = g.zip(at, |gv, av| gv * av)?;
                accumulate(grads, *a, da);
                accumulate(grads, *row, column_sums(&gx, rt.shape()));
            }
            Op::Sub(a, b) => {
                accumulate(grads, *a, g.clone());
                accumulate(grads, *b, g.map(|v| -v));
            }
            Op::Mul(a, b) => {
                let da = g.zip(self.value(*b), |gv, bv| gv * bv)?;
                let db = g.zip(self.value(*a), |gv, av| gv * av)?;
                accumulate(grads, *a, da);
                accumulate(grads, *b, db);
            }
            Op::Affine { x, mul, .. } => {
                accumulate(grads, *x, g.map(|v| v * mul));
            }
            Op::Matmul(a, b) => {
                accumulate(grads, *a, matmul_nt(g, self.value(*b))?);
                accumulate(grads, *b, matmul_tn(self.value(*a), g)?);
            }
            Op::MatmulNT(a, b) => {
                accumulate(grads, *a, matmul_nn(g, self.value(*b))?);
                accumulate(grads, *b, matmul_tn(g, self.value(*a))?);
            }
            Op::Concat { axis, parts } => {
                let rank = self.value(parts[0]).shape().len();
                if rank == 1 || *axis == 0 {
                    let mut offset = 0;
                    for &p in parts {
                        let pt = self.value(p);
                        let n = pt.numel();
                        let piece =
                            Tensor::from_vec(pt.shape().to_vec(), g.data()[offset..offset + n].to_vec())?;
                        offset += n;
                        accumulate(grads, p, piece);
                    }
                } else {
                    let rows = g.rows();
                    let mut col_off = 0;
                    for &p in parts {
                        let pt = self.value(p);
                        let pc = pt.cols();
                        let mut data = Vec::with_capacity(rows * pc);
                        for r in 0..rows {
                            data.extend_from_slice(&g.row(r)[col_off..col_off + pc]);
                        }
                        col_off += pc;
                        accumulate(grads, p, Tensor::from_vec(pt.shape().to_vec(), data)?);
                    }
                }
            }
            Op::Slice { x, axis, start, len } => {
                let xt = self.value(*x);
                let mut dx = Tensor::zeros(xt.shape().to_vec());
                let rank = xt.shape().len();
                if rank == 1 {
                    dx.data_mut()[*start..start + len].copy_from_slice(g.data());
                } else if *axis == 0 {
                    let c = xt.cols();
                    dx.data_mut()[start * c..(start + len) * c].copy_from_slice(g.data());
                } else {
                    let c = xt.cols();
                    for r in 0..xt.rows() {
                        dx.data_mut()[r * c + start..r * c + start + len]
                            .copy_from_slice(g.row(r));
                    }
                }
                accumulate(grads, *x, dx);
            }
            Op::Reshape(x) => {
                let shape = self.value(*x).shape().to_vec();
                accumulate(grads, *x, g.clone().reshape(shape)?);
            }
            Op::Sigmoid(x) => {
                let dx = g.zip(&node.value, |gv, y| gv * y * (1.0 - y))?;
                accumulate(grads, *x, dx);
            }
            Op::Tanh(x) => {
                let dx = g.zip(&node.value, |gv, y| gv * (1.0 - y * y))?;
                accumulate(grads, *x, dx);
            }
            Op::Exp(x) => {
                let dx = g.zip(&node.value, |gv, y| gv * y)?;
                accumulate(grads, *x, dx);
            }
            Op::Log(x) => {
                let dx = g.zip(self.value(*x), |gv, xv| gv / xv)?;
                accumulate(grads, *x, dx);
            }
            Op::Square(x) => {
                let dx = g.zip(self.value(*x), |gv, xv| gv * 2.0 * xv)?;
                accumulate(grads, *x, dx);
            }
            Op::Clamp { x, lo, hi } => {
                let dx = g.zip(self.value(*x), |gv, xv| {
                    if xv > *lo && xv < *hi {
                        gv
                    } else {
                        0.0
                    }
                })?;
                accumulate(grads, *x, dx);
            }
            Op::Softmax(x) => {
                let y = &node.value;
                let c = y.cols();
                let mut data = Vec::with_capacity(y.numel());
                for r in 0..y.rows() {
                    let yr = &y.data()[r * c..(r + 1) * c];
                    let gr = &g.data()[r * c..(r + 1) * c];
                    let dot: f64 = yr.iter().zip(gr).map(|(&yv, &gv)| yv * gv).sum();
                    data.extend(yr.iter().zip(gr).map(|(&yv, &gv)| yv * (gv - dot)));
                }
                accumulate(grads, *x, Tensor::from_vec(y.shape().to_vec(), data)?);
            }
            Op::LogSoftmax(x) => {
                let y = &node.value;
                let c = y.cols();
                let mut data = Vec::with_capacity(y.numel());
                for r in 0..y.rows() {
                    let yr = &y.data()[r * c..(r + 1) * c];
                    let gr = &g.data()[r * c..(r + 1) * c];
                    let gsum: f64 = gr.iter().sum();
                    data.extend(yr.iter().zip(gr).map(|(&yv, &gv)| gv - yv.exp() * gsum));
                }
                accumulate(grads, *x, Tensor::from_vec(y.shape().to_vec(), data)?);
            }
            Op::LogSumExp(x) => {
                let xt = self.value(*x);
                let c = xt.cols();
                let mut data = Vec::with_capacity(xt.numel());
                for r in 0..xt.rows() {
                    let xr = &xt.data()[r * c..(r + 1) * c];
                    let lse = node.value.data()[r];
                    let gr = g.data()[r];
                    data.extend(xr.iter().map(|&xv| gr * (xv - lse).exp()));
                }
                accumulate(grads, *x, Tensor::from_vec(xt.shape().to_vec(), data)?);
            }
            Op::LayerNorm { x, mean: _, inv_std } => {
                let xt = self.value(*x);
                let y = &node.value;
                let c = xt.cols();
                let cf = c as f64;
                let mut data = Vec::with_capacity(xt.numel());
                for r in 0..xt.rows() {
                    let yr = &y.data()[r * c..(r + 1) * c];
                    let gr = &g.data()[r * c..(r + 1) * c];
                    let s = inv_std[r];
                    let g_mean: f64 = gr.iter().sum::<f64>() / cf;
                    let gy_mean: f64 =
                        gr.iter().zip(yr).map(|(&gv, &yv)| gv * yv).sum::<f64>() / cf;
                    data.extend(
                        gr.iter()
                            .zip(yr)
                            .map(|(&gv, &yv)| s * (gv - g_mean - yv * gy_mean)),
                    );
                }
                accumulate(grads, *x, Tensor::from_vec(xt.shape().to_vec(), data)?);
            }
            Op::Sum(x) => {
                let gv = g.item();
                accumulate(grads, *x, Tensor::full(self.value(*x).shape().to_vec(), gv));
            }
            Op::Mean(x) => {
                let xt = self.value(*x);
                let gv = g.item() / xt.numel() as f64;
                accumulate(grads, *x, Tensor::full(xt.shape().to_vec(), gv));
            }
            Op::Mse(a, b) => {
                let (at, bt) = (self.value(*a), self.value(*b));
                let scale = 2.0 * g.item() / at.numel() as f64;
                let da = at.zip(bt, |x, y| scale * (x - y))?;
                let db = da.map(|v| -v);
                accumulate(grads, *a, da);
                accumulate(grads, *b, db);
            }
        }
        Ok(())
    }
}

fn accumulate(grads: &mut [Option<Tensor>], id: NodeId, delta: Tensor) {
    match &mut grads[id.0] {
        Some(existing) => {
            for (e, d) in existing.data_mut().iter_mut().zip(delta.data()) {
                *e += d;
            }
        }
        slot @ None => *slot = Some(delta),
    }
}

/// Sum over rows, shaped like the broadcast row operand.
fn column_sums(g: &Tensor, row_shape: &[usize]) -> Tensor {
    let c = g.cols();
    let mut sums = vec![0.0; c];
    for row in g.data().chunks_exact(c) {
        for (s, &v) in sums.iter_mut().zip(row) {
            *s += v;
        }
    }
    Tensor::from_vec(row_shape.to_vec(), sums).expect("row shape matches column count")
}

fn row_map(t: &Tensor, f: impl Fn(&[f64], &mut [f64])) -> Tensor {
    let c = t.cols();
    let mut data = vec![0.0; t.numel()];
    for (orow, irow) in data.chunks_exact_mut(c).zip(t.data().chunks_exact(c)) {
        f(irow, orow);
    }
    Tensor::from_vec(t.shape().to_vec(), data).expect("shape preserved")
}

fn logsumexp_slice(row: &[f64]) -> f64 {
    let max = row.iter().cloned().fold(f64::NEG_INFINITY, f64::max);
    max + row.iter().map(|&v| (v - max).exp()).sum::<f64>().ln()
}

fn softmax_row(row: &[f64], out: &mut [f64]) {
    let lse = logsumexp_slice(row);
    for (o, &r) in out.iter_mut().zip(row) {
        *o = (r - lse).exp();
    }
}
