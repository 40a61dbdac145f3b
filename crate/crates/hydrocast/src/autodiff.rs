//! Tape-based reverse-mode automatic differentiation over dense `f64`
//! tensors of rank 1 to 3.
//!
//! A [`Graph`] is an append-only tape: every operation records its inputs
//! and its computed value, so the tape order is already a topological
//! order. [`Graph::backward`] walks the tape once in reverse from a scalar
//! loss node and accumulates gradients into every node that (transitively)
//! depends on a leaf. Constants never receive gradient buffers, which
//! keeps the backward pass from wasting time differentiating with respect
//! to input data.
//!
//! The op set is deliberately small: matrix multiplication, elementwise
//! arithmetic, the activations the forecast model needs (sigmoid, tanh,
//! softplus, exp, log), column slicing/concatenation, broadcast row
//! addition, and scalar reductions. Each op has a hand-written adjoint,
//! and the whole set is validated against central finite differences in
//! the tests below.

use serde::{Deserialize, Serialize};
use thiserror::Error;

#[derive(Debug, Error, PartialEq)]
pub enum AutodiffError {
    #[error("{op}: operand shapes {left:?} and {right:?} are incompatible")]
    ShapeMismatch {
        op: &'static str,
        left: Vec<usize>,
        right: Vec<usize>,
    },
    #[error("{op} expects a rank-2 operand, got shape {shape:?}")]
    NotAMatrix { op: &'static str, shape: Vec<usize> },
    #[error("tensor rank {rank} out of range (supported: 1..=3)")]
    BadRank { rank: usize },
    #[error("tensor data length {len} does not match shape {shape:?}")]
    BadDataLength { shape: Vec<usize>, len: usize },
    #[error("column slice {start}..{end} out of bounds for shape {shape:?}")]
    BadSlice {
        shape: Vec<usize>,
        start: usize,
        end: usize,
    },
    #[error("backward requires a scalar loss, got shape {shape:?}")]
    NonScalarLoss { shape: Vec<usize> },
    #[error("concat requires at least one operand")]
    EmptyConcat,
}

/// Dense row-major tensor of rank 1, 2, or 3.
#[derive(Debug, Clone, PartialEq, Serialize, Deserialize)]
pub struct Tensor {
    shape: Vec<usize>,
    data: Vec<f64>,
}

impl Tensor {
    pub fn from_vec(shape: Vec<usize>, data: Vec<f64>) -> Result<Self, AutodiffError> {
        if shape.is_empty() || shape.len() > 3 {
            return Err(AutodiffError::BadRank { rank: shape.len() });
        }
        let numel: usize = shape.iter().product();
        if numel != data.len() {
            return Err(AutodiffError::BadDataLength { shape, len: data.len() });
        }
        Ok(Self { shape, data })
    }

    pub fn zeros(shape: Vec<usize>) -> Self {
        let numel: usize = shape.iter().product();
        assert!(!shape.is_empty() && shape.len() <= 3, "bad tensor rank {}", shape.len());
        Self { shape, data: vec![0.0; numel] }
    }

    pub fn scalar(value: f64) -> Self {
        Self { shape: vec![1], data: vec![value] }
    }

    pub fn vector(data: Vec<f64>) -> Self {
        Self { shape: vec![data.len()], data }
    }

    pub fn matrix(rows: usize, cols: usize, data: Vec<f64>) -> Result<Self, AutodiffError> {
        Self::from_vec(vec![rows, cols], data)
    }

    pub fn shape(&self) -> &[usize] {
        &self.shape
    }

    pub fn numel(&self) -> usize {
        self.data.len()
    }

    pub fn data(&self) -> &[f64] {
        &self.data
    }

    pub fn data_mut(&mut self) -> &mut [f64] {
        &mut self.data
    }

    /// Single stored value; panics unless the tensor has exactly one element.
    pub fn item(&self) -> f64 {
        assert_eq!(self.data.len(), 1, "item() on tensor of shape {:?}", self.shape);
        self.data[0]
    }

    pub fn is_scalar(&self) -> bool {
        self.data.len() == 1
    }

    fn rows(&self) -> usize {
        self.shape[0]
    }

    fn cols(&self) -> usize {
        self.shape[1]
    }
}

#[derive(Debug, Clone, Copy, PartialEq, Eq)]
pub struct NodeId(usize);

#[derive(Debug, Clone)]
enum Op {
    Input,
    MatMul(NodeId, NodeId),
    Add(NodeId, NodeId),
    Sub(NodeId, NodeId),
    Mul(NodeId, NodeId),
    Div(NodeId, NodeId),
    Max(NodeId, NodeId),
    AddRow(NodeId, NodeId),
    Sigmoid(NodeId),
    Tanh(NodeId),
    Softplus(NodeId),
    Exp(NodeId),
    Log(NodeId),
    Scale(NodeId, f64),
    AddConst(NodeId),
    SliceCols(NodeId, usize, usize),
    ConcatCols(Vec<NodeId>),
    SumAll(NodeId),
    MeanAll(NodeId),
}

struct Node {
    value: Tensor,
    grad: Option<Tensor>,
    needs_grad: bool,
    op: Op,
}

/// Append-only computation tape.
#[derive(Default)]
pub struct Graph {
    nodes: Vec<Node>,
}

/// Numerically stable logistic function.
pub fn sigmoid(x: f64) -> f64 {
    if x >= 0.0 {
        1.0 / (1.0 + (-x).exp())
    } else {
        let e = x.exp();
        e / (1.0 + e)
    }
}

/// Numerically stable ln(1 + e^x).
pub fn softplus(x: f64) -> f64 {
    if x > 0.0 {
        x + (-x).exp().ln_1p()
    } else {
        x.exp().ln_1p()
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

    /// Differentiable input: a parameter whose gradient will be computed.
    pub fn leaf(&mut self, value: Tensor) -> NodeId {
        self.push(value, true, Op::Input)
    }

    /// Non-differentiable input (data, masks). Backward skips these.
    pub fn constant(&mut self, value: Tensor) -> NodeId {
        self.push(value, false, Op::Input)
    }

    pub fn value(&self, id: NodeId) -> &Tensor {
        &self.nodes[id.0].value
    }

    /// Gradient accumulated by the latest `backward` call. `None` before
    /// backward has run or for nodes that cannot influence any leaf.
    pub fn grad(&self, id: NodeId) -> Option<&Tensor> {
        self.nodes[id.0].grad.as_ref()
    }

    fn push(&mut self, value: Tensor, needs_grad: bool, op: Op) -> NodeId {
        self.nodes.push(Node { value, grad: None, needs_grad, op });
        NodeId(self.nodes.len() - 1)
    }

    fn needs(&self, id: NodeId) -> bool {
        self.nodes[id.0].needs_grad
    }

    pub fn matmul(&mut self, a: NodeId, b: NodeId) -> Result<NodeId, AutodiffError> {
        let (va, vb) = (&self.nodes[a.0].value, &self.nodes[b.0].value);
        if va.shape.len() != 2 {
            return Err(AutodiffError::NotAMatrix { op: "matmul", shape: va.shape.clone() });
        }
        if vb.shape.len() != 2 {
            return Err(AutodiffError::NotAMatrix { op: "matmul", shape: vb.shape.clone() });
        }
        if va.cols() != vb.rows() {
            return Err(AutodiffError::ShapeMismatch {
                op: "matmul",
                left: va.shape.clone(),
                right: vb.shape.clone(),
            });
        }
        let (m, k, n) = (va.rows(), va.cols(), vb.cols());
        let mut out = vec![0.0; m * n];
        mm_acc(&mut out, &va.data, &vb.data, m, k, n);
        let needs = self.needs(a) || self.needs(b);
        Ok(self.push(Tensor { shape: vec![m, n], data: out }, needs, Op::MatMul(a, b)))
    }

    fn binary(
        &mut self,
        op_name: &'static str,
        a: NodeId,
        b: NodeId,
        f: impl Fn(f64, f64) -> f64,
        op: Op,
    ) -> Result<NodeId, AutodiffError> {
        let (va, vb) = (&self.nodes[a.0].value, &self.nodes[b.0].value);
        if va.shape != vb.shape {
            return Err(AutodiffError::ShapeMismatch {
                op: op_name,
                left: va.shape.clone(),
                right: vb.shape.clone(),
            });
        }
        let data: Vec<f64> = va.data.iter().zip(&vb.data).map(|(&x, &y)| f(x, y)).collect();
        let shape = va.shape.clone();
        let needs = self.needs(a) || self.needs(b);
        Ok(self.push(Tensor { shape, data }, needs, op))
    }

    pub fn add(&mut self, a: NodeId, b: NodeId) -> Result<NodeId, AutodiffError> {
        self.binary("add", a, b, |x, y| x + y, Op::Add(a, b))
    }

    pub fn sub(&mut self, a: NodeId, b: NodeId) -> Result<NodeId, AutodiffError> {
        self.binary("sub", a, b, |x, y| x - y, Op::Sub(a, b))
    }

    pub fn mul(&mut self, a: NodeId, b: NodeId) -> Result<NodeId, AutodiffError> {
        self.binary("mul", a, b, |x, y| x * y, Op::Mul(a, b))
    }

    pub fn div(&mut self, a: NodeId, b: NodeId) -> Result<NodeId, AutodiffError> {
        self.binary("div", a, b, |x, y| x / y, Op::Div(a, b))
    }

    /// Elementwise maximum. Ties route their gradient to the first operand.
    pub fn max(&mut self, a: NodeId, b: NodeId) -> Result<NodeId, AutodiffError> {
        self.binary("max", a, b, f64::max, Op::Max(a, b))
    }

    /// Broadcast add of a rank-1 row vector to every row of a matrix.
    pub fn add_row(&mut self, m: NodeId, v: NodeId) -> Result<NodeId, AutodiffError> {
        let (vm, vv) = (&self.nodes[m.0].value, &self.nodes[v.0].value);
        if vm.shape.len() != 2 {
            return Err(AutodiffError::NotAMatrix { op: "add_row", shape: vm.shape.clone() });
        }
        if vv.shape.len() != 1 || vv.shape[0] != vm.cols() {
            return Err(AutodiffError::ShapeMismatch {
                op: "add_row",
                left: vm.shape.clone(),
                right: vv.shape.clone(),
            });
        }
        let cols = vm.cols();
        let data: Vec<f64> = vm
            .data
            .iter()
            .enumerate()
            .map(|(i, &x)| x + vv.data[i % cols])
            .collect();
        let shape = vm.shape.clone();
        let needs = self.needs(m) || self.needs(v);
        Ok(self.push(Tensor { shape, data }, needs, Op::AddRow(m, v)))
    }

    fn unary(&mut self, x: NodeId, f: impl Fn(f64) -> f64, op: Op) -> NodeId {
        let vx = &self.nodes[x.0].value;
        let data: Vec<f64> = vx.data.iter().map(|&v| f(v)).collect();
        let shape = vx.shape.clone();
        let needs = self.needs(x);
        self.push(Tensor { shape, data }, needs, op)
    }

    pub fn sigmoid(&mut self, x: NodeId) -> NodeId {
        self.unary(x, sigmoid, Op::Sigmoid(x))
    }

    pub fn tanh(&mut self, x: NodeId) -> NodeId {
        self.unary(x, f64::tanh, Op::Tanh(x))
    }

    pub fn softplus(&mut self, x: NodeId) -> NodeId {
        self.unary(x, softplus, Op::Softplus(x))
    }

    pub fn exp(&mut self, x: NodeId) -> NodeId {
        self.unary(x, f64::exp, Op::Exp(x))
    }

    pub fn log(&mut self, x: NodeId) -> NodeId {
        self.unary(x, f64::ln, Op::Log(x))
    }

    pub fn scale(&mut self, x: NodeId, k: f64) -> NodeId {
        self.unary(x, |v| v * k, Op::Scale(x, k))
    }

    pub fn add_const(&mut self, x: NodeId, k: f64) -> NodeId {
        self.unary(x, |v| v + k, Op::AddConst(x))
    }

    /// Columns `start..end` of a rank-2 node.
    pub fn slice_cols(
        &mut self,
        x: NodeId,
        start: usize,
        end: usize,
    ) -> Result<NodeId, AutodiffError> {
        let vx = &self.nodes[x.0].value;
        if vx.shape.len() != 2 {
            return Err(AutodiffError::NotAMatrix { op: "slice_cols", shape: vx.shape.clone() });
        }
        if start >= end || end > vx.cols() {
            return Err(AutodiffError::BadSlice { shape: vx.shape.clone(), start, end });
        }
        let (rows, cols) = (vx.rows(), vx.cols());
        let width = end - start;
        let mut data = Vec::with_capacity(rows * width);
        for r in 0..rows {
            data.extend_from_slice(&vx.data[r * cols + start..r * cols + end]);
        }
        let needs = self.needs(x);
        Ok(self.push(
            Tensor { shape: vec![rows, width], data },
            needs,
            Op::SliceCols(x, start, end),
        ))
    }

    /// Concatenate rank-2 nodes with equal row counts along columns.
    pub fn concat_cols(&mut self, parts: &[NodeId]) -> Result<NodeId, AutodiffError> {
        if parts.is_empty() {
            return Err(AutodiffError::EmptyConcat);
        }
        let rows = {
            let first = &self.nodes[parts[0].0].value;
            if first.shape.len() != 2 {
                return Err(AutodiffError::NotAMatrix {
                    op: "concat_cols",
                    shape: first.shape.clone(),
                });
            }
            first.rows()
        };
        let mut total_cols = 0;
        for &p in parts {
            let v = &self.nodes[p.0].value;
            if v.shape.len() != 2 || v.rows() != rows {
                return Err(AutodiffError::ShapeMismatch {
                    op: "concat_cols",
                    left: vec![rows, total_cols],
                    right: v.shape.clone(),
                });
            }
            total_cols += v.cols();
        }
        let mut data = Vec::with_capacity(rows * total_cols);
        for r in 0..rows {
            for &p in parts {
                let v = &self.nodes[p.0].value;
                let c = v.cols();
                data.extend_from_slice(&v.data[r * c..(r + 1) * c]);
            }
        }
        let needs = parts.iter().any(|&p| self.needs(p));
        Ok(self.push(
            Tensor { shape: vec![rows, total_cols], data },
            needs,
            Op::ConcatCols(parts.to_vec()),
        ))
    }

    /// Sum of all elements, as a rank-1 scalar tensor.
    pub fn sum_all(&mut self, x: NodeId) -> NodeId {
        let s: f64 = self.nodes[x.0].value.data.iter().sum();
        let needs = self.needs(x);
        self.push(Tensor::scalar(s), needs, Op::SumAll(x))
    }

    /// Mean of all elements, as a rank-1 scalar tensor.
    pub fn mean_all(&mut self, x: NodeId) -> NodeId {
        let v = &self.nodes[x.0].value;
        let m = v.data.iter().sum::<f64>() / v.data.len() as f64;
        let needs = self.needs(x);
        self.push(Tensor::scalar(m), needs, Op::MeanAll(x))
    }

    /// Reverse sweep from a scalar loss. Visits the tape once in reverse
    /// creation order (which is a topological order by construction) and
    /// accumulates `d loss / d node` into every gradient-bearing node.
    pub fn backward(&mut self, loss: NodeId) -> Result<(), AutodiffError> {
        if !self.nodes[loss.0].value.is_scalar() {
            return Err(AutodiffError::NonScalarLoss {
                shape: self.nodes[loss.0].value.shape.clone(),
            });
        }
        for node in &mut self.nodes {
            node.grad = if node.needs_grad {
                Some(Tensor::zeros(node.value.shape.clone()))
            } else {
                None
            };
        }
        if !self.nodes[loss.0].needs_grad {
            // Loss depends on no leaf; all leaf gradients are zero.
            return Ok(());
        }
        self.nodes[loss.0].grad.as_mut().unwrap().data[0] = 1.0;
        for i in (0..=loss.0).rev() {
            if self.nodes[i].grad.is_none() {
                continue;
            }
            self.propagate(i);
        }
        Ok(())
    }

    /// Push node `i`'s gradient into its inputs.
    fn propagate(&mut self, i: usize) {
        let op = self.nodes[i].op.clone();
        let g = self.nodes[i].grad.take().unwrap();
        match op {
            Op::Input => {}
            Op::MatMul(a, b) => {
                let (m, n) = (self.nodes[i].value.rows(), self.nodes[i].value.cols());
                let k = self.nodes[a.0].value.cols();
                if self.needs(a) {
                    // da[i][p] += sum_j g[i][j] * b[p][j]
                    let bd = self.nodes[b.0].value.data.clone();
                    let da = self.nodes[a.0].grad.as_mut().unwrap();
                    for r in 0..m {
                        for p in 0..k {
                            let mut acc = 0.0;
                            for j in 0..n {
                                acc += g.data[r * n + j] * bd[p * n + j];
                            }
                            da.data[r * k + p] += acc;
                        }
                    }
                }
                if self.needs(b) {
                    // db[p][j] += sum_i a[i][p] * g[i][j]
                    let ad = self.nodes[a.0].value.data.clone();
                    let db = self.nodes[b.0].grad.as_mut().unwrap();
                    for r in 0..m {
                        for p in 0..k {
                            let av = ad[r * k + p];
                            if av == 0.0 {
                                continue;
                            }
                            for j in 0..n {
                                db.data[p * n + j] += av * g.data[r * n + j];
                            }
                        }
                    }
                }
            }
            Op::Add(a, b) => {
                self.acc_indexed(a, &g, |_, gi| gi);
                self.acc_indexed(b, &g, |_, gi| gi);
            }
            Op::Sub(a, b) => {
                self.acc_indexed(a, &g, |_, gi| gi);
                self.acc_indexed(b, &g, |_, gi| -gi);
            }
            Op::Mul(a, b) => {
                if self.needs(a) {
                    let other = self.nodes[b.0].value.data.clone();
                    let da = self.nodes[a.0].grad.as_mut().unwrap();
                    for (j, gd) in g.data.iter().enumerate() {
                        da.data[j] += gd * other[j];
                    }
                }
                if self.needs(b) {
                    let other = self.nodes[a.0].value.data.clone();
                    let db = self.nodes[b.0].grad.as_mut().unwrap();
                    for (j, gd) in g.data.iter().enumerate() {
                        db.data[j] += gd * other[j];
                    }
                }
            }
            Op::Div(a, b) => {
                let out = self.nodes[i].value.data.clone();
                let denom = self.nodes[b.0].value.data.clone();
                if self.needs(a) {
                    let da = self.nodes[a.0].grad.as_mut().unwrap();
                    for (j, gd) in g.data.iter().enumerate() {
                        da.data[j] += gd / denom[j];
                    }
                }
                if self.needs(b) {
                    let db = self.nodes[b.0].grad.as_mut().unwrap();
                    for (j, gd) in g.data.iter().enumerate() {
                        db.data[j] -= gd * out[j] / denom[j];
                    }
                }
            }
            Op::Max(a, b) => {
                let av = self.nodes[a.0].value.data.clone();
                let bv = self.nodes[b.0].value.data.clone();
                if self.needs(a) {
                    let da = self.nodes[a.0].grad.as_mut().unwrap();
                    for (j, gd) in g.data.iter().enumerate() {
                        if av[j] >= bv[j] {
                            da.data[j] += gd;
                        }
                    }
                }
                if self.needs(b) {
                    let db = self.nodes[b.0].grad.as_mut().unwrap();
                    for (j, gd) in g.data.iter().enumerate() {
                        if av[j] < bv[j] {
                            db.data[j] += gd;
                        }
                    }
                }
            }
            Op::AddRow(m_id, v_id) => {
                if self.needs(m_id) {
                    let dm = self.nodes[m_id.0].grad.as_mut().unwrap();
                    for (j, gd) in g.data.iter().enumerate() {
                        dm.data[j] += gd;
                    }
                }
                if self.needs(v_id) {
                    let cols = self.nodes[v_id.0].value.numel();
                    let dv = self.nodes[v_id.0].grad.as_mut().unwrap();
                    for (j, gd) in g.data.iter().enumerate() {
                        dv.data[j % cols] += gd;
                    }
                }
            }
            Op::Sigmoid(x) => {
                let out = self.nodes[i].value.data.clone();
                self.acc_indexed(x, &g, |j, gi| gi * out[j] * (1.0 - out[j]));
            }
            Op::Tanh(x) => {
                let out = self.nodes[i].value.data.clone();
                self.acc_indexed(x, &g, |j, gi| gi * (1.0 - out[j] * out[j]));
            }
            Op::Softplus(x) => {
                let input = self.nodes[x.0].value.data.clone();
                self.acc_indexed(x, &g, |j, gi| gi * sigmoid(input[j]));
            }
            Op::Exp(x) => {
                let out = self.nodes[i].value.data.clone();
                self.acc_indexed(x, &g, |j, gi| gi * out[j]);
            }
            Op::Log(x) => {
                let input = self.nodes[x.0].value.data.clone();
                self.acc_indexed(x, &g, |j, gi| gi / input[j]);
            }
            Op::Scale(x, k) => {
                self.acc_indexed(x, &g, |_, gi| gi * k);
            }
            Op::AddConst(x) => {
                self.acc_indexed(x, &g, |_, gi| gi);
            }
            Op::SliceCols(x, start, end) => {
                if self.needs(x) {
                    let cols = self.nodes[x.0].value.cols();
                    let width = end - start;
                    let dx = self.nodes[x.0].grad.as_mut().unwrap();
                    for (j, gd) in g.data.iter().enumerate() {
                        let (r, c) = (j / width, j % width);
                        dx.data[r * cols + start + c] += gd;
                    }
                }
            }
            Op::ConcatCols(parts) => {
                let rows = self.nodes[i].value.rows();
                let total = self.nodes[i].value.cols();
                let mut offset = 0;
                for p in parts {
                    let c = self.nodes[p.0].value.cols();
                    if self.needs(p) {
                        let dp = self.nodes[p.0].grad.as_mut().unwrap();
                        for r in 0..rows {
                            for j in 0..c {
                                dp.data[r * c + j] += g.data[r * total + offset + j];
                            }
                        }
                    }
                    offset += c;
                }
            }
            Op::SumAll(x) => {
                let gd = g.data[0];
                self.acc_indexed(x, &Tensor::scalar(gd), |_, _| gd);
            }
            Op::MeanAll(x) => {
                let n = self.nodes[x.0].value.numel() as f64;
                let gd = g.data[0] / n;
                self.acc_indexed(x, &Tensor::scalar(gd), |_, _| gd);
            }
        }
        self.nodes[i].grad = Some(g);
    }

    /// Accumulate `f(index, upstream)` into `target`'s gradient. When the
    /// upstream tensor is a broadcast scalar (sum/mean), `f` ignores it.
    fn acc_indexed(&mut self, target: NodeId, g: &Tensor, f: impl Fn(usize, f64) -> f64) {
        if self.needs(target) {
            let dt = self.nodes[target.0].grad.as_mut().unwrap();
            if g.data.len() == dt.data.len() {
                for (j, gd) in g.data.iter().enumerate() {
                    dt.data[j] += f(j, *gd);
                }
            } else {
                // Broadcast scalar upstream (sum_all / mean_all adjoints).
                for j in 0..dt.data.len() {
                    dt.data[j] += f(j, g.data[0]);
                }
            }
        }
    }
}

/// out[m x n] += a[m x k] * b[k x n], row-major.
fn mm_acc(out: &mut [f64], a: &[f64], b: &[f64], m: usize, k: usize, n: usize) {
    for r in 0..m {
        for p in 0..k {
            let av = a[r * k + p];
            if av == 0.0 {
                continue;
            }
            let brow = &b[p * n..(p + 1) * n];
            let orow = &mut out[r * n..(r + 1) * n];
            for j in 0..n {
                orow[j] += av * brow[j];
            }
        }
    }
}
