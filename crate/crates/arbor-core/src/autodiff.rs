//! Reverse-mode automatic differentiation on a flat tape.
//!
//! The model builds its forward pass by pushing operations onto a [`Tape`];
//! values are computed eagerly, so any intermediate can be inspected right
//! after it is created. [`Tape::backward`] then walks the tape once in
//! reverse, producing exact gradients for every named parameter reachable
//! from a scalar loss.
//!
//! Parameters live outside the tape in a [`ParamStore`] as named `f32`
//! blocks (the checkpoint unit); they are materialized into `f64` matrices
//! when first referenced so that all arithmetic — forward and backward —
//! runs in double precision.
//!
//! The op set is deliberately closed: exactly what a small post-norm
//! transformer encoder, a biaffine parser, and softmax-based losses need.
//! Score masking is done by adding constants containing `-inf`; softmax and
//! log-softmax treat those entries as zero-probability without producing
//! NaN in either direction.

use alloc::collections::BTreeMap;
use alloc::string::String;
use alloc::vec::Vec;

use crate::fmath;
use crate::matrix::{matmul, Matrix};

/// Named `f32` parameter blocks — the unit of storage, update, and
/// checkpointing. Iteration order is sorted by name, which makes every
/// serialization and update pass deterministic.
#[derive(Debug, Clone, PartialEq, Default)]
pub struct ParamStore {
    entries: BTreeMap<String, Param>,
}

/// One parameter tensor, stored row-major in `f32`.
#[derive(Debug, Clone, PartialEq)]
pub struct Param {
    pub rows: usize,
    pub cols: usize,
    pub data: Vec<f32>,
}

impl ParamStore {
    pub fn new() -> Self {
        ParamStore::default()
    }

    /// Register a tensor. Panics on shape mismatch or duplicate name:
    /// both are construction bugs, not runtime conditions.
    pub fn insert(&mut self, name: &str, rows: usize, cols: usize, data: Vec<f32>) {
        assert_eq!(data.len(), rows * cols, "param `{name}` shape mismatch");
        let prior = self
            .entries
            .insert(String::from(name), Param { rows, cols, data });
        assert!(prior.is_none(), "param `{name}` registered twice");
    }

    pub fn get(&self, name: &str) -> Option<&Param> {
        self.entries.get(name)
    }

    pub fn get_mut(&mut self, name: &str) -> Option<&mut Param> {
        self.entries.get_mut(name)
    }

    /// Parameter tensors in name order.
    pub fn iter(&self) -> impl Iterator<Item = (&str, &Param)> {
        self.entries.iter().map(|(k, v)| (k.as_str(), v))
    }

    pub fn iter_mut(&mut self) -> impl Iterator<Item = (&str, &mut Param)> {
        self.entries.iter_mut().map(|(k, v)| (k.as_str(), v))
    }

    /// Total number of scalar parameters.
    pub fn scalar_count(&self) -> usize {
        self.entries.values().map(|p| p.data.len()).sum()
    }

    pub fn is_finite(&self) -> bool {
        self.entries
            .values()
            .all(|p| p.data.iter().all(|v| v.is_finite()))
    }

    fn materialize(&self, name: &str) -> Matrix {
        let p = self
            .entries
            .get(name)
            .unwrap_or_else(|| panic!("unknown parameter `{name}`"));
        Matrix::from_vec(p.rows, p.cols, p.data.iter().map(|&v| v as f64).collect())
    }
}

/// Per-parameter gradient matrices produced by [`Tape::backward`].
#[derive(Debug, Clone, PartialEq, Default)]
pub struct Gradients {
    map: BTreeMap<String, Matrix>,
}

impl Gradients {
    pub fn new() -> Self {
        Gradients::default()
    }

    pub fn accumulate(&mut self, name: &str, grad: &Matrix) {
        match self.map.get_mut(name) {
            Some(existing) => existing.add_assign(grad),
            None => {
                self.map.insert(String::from(name), grad.clone());
            }
        }
    }

    pub fn get(&self, name: &str) -> Option<&Matrix> {
        self.map.get(name)
    }

    pub fn iter(&self) -> impl Iterator<Item = (&str, &Matrix)> {
        self.map.iter().map(|(k, v)| (k.as_str(), v))
    }

    /// L2 norm over all entries of all parameter gradients.
    pub fn global_norm(&self) -> f64 {
        let sum: f64 = self
            .map
            .values()
            .flat_map(|m| m.data().iter())
            .map(|v| v * v)
            .sum();
        fmath::sqrt(sum)
    }

    pub fn scale(&mut self, factor: f64) {
        for m in self.map.values_mut() {
            m.scale_assign(factor);
        }
    }

    /// Merge another gradient set into this one.
    pub fn add(&mut self, other: &Gradients) {
        for (name, grad) in other.iter() {
            self.accumulate(name, grad);
        }
    }
}

/// Backward-pass failure: some parameter's gradient left the finite range.
#[derive(Debug, Clone, PartialEq, Eq, thiserror::Error)]
pub enum GradError {
    #[error("gradient for parameter `{name}` is not finite")]
    NotFinite { name: String },
}

pub type NodeId = usize;

/// Differentiable operations. Input arity is fixed per variant; shapes are
/// validated when the node is pushed.
#[derive(Debug, Clone)]
enum Op {
    /// Leaf with no gradient.
    Const,
    /// Leaf materialized from the parameter store; gradients accumulate
    /// under its name.
    Param {
        name: String,
    },
    /// Select rows of the input: `out[i] = in[indices[i]]`.
    GatherRows {
        indices: Vec<usize>,
    },
    /// Elementwise sum of two same-shaped inputs.
    Add,
    /// Add a `1 x c` row vector to every row of an `r x c` input.
    AddRowBroadcast,
    /// Add an `r x 1` column vector to every column of an `r x c` input.
    AddColBroadcast,
    /// Elementwise product of two same-shaped inputs.
    Mul,
    /// Multiply every row of an `r x c` input by a `1 x c` row vector.
    MulRowBroadcast,
    /// Multiply by a constant scalar.
    Scale {
        factor: f64,
    },
    /// `op(a) * op(b)` with optional transposes.
    MatMul {
        ta: bool,
        tb: bool,
    },
    Relu,
    /// Softmax independently over each row.
    RowSoftmax,
    /// Log-softmax independently over each row.
    RowLogSoftmax,
    /// Per-row standardization `(x - mean) / sqrt(var + eps)`, no affine.
    LayerNorm {
        eps: f64,
    },
    /// Column means: `r x c -> 1 x c`.
    MeanRows,
    /// Row sums: `r x c -> r x 1`.
    RowSum,
    /// Scale each row to unit L2 norm (rows with norm below `eps` are
    /// divided by `eps` instead).
    L2NormalizeRows {
        eps: f64,
    },
    /// Keep a contiguous row range beginning at `start`.
    SliceRows {
        start: usize,
    },
    /// Keep a contiguous column range beginning at `start`.
    SliceCols {
        start: usize,
    },
    /// Stack inputs vertically; all must share a column count.
    ConcatRows,
    /// Stack inputs horizontally; all must share a row count.
    ConcatCols,
    /// Mean negative log-likelihood: input is `r x c` log-probabilities,
    /// output the `1 x 1` scalar `-mean_i input[i][targets[i]]`.
    NllMean {
        targets: Vec<usize>,
    },
}

struct Node {
    op: Op,
    inputs: Vec<NodeId>,
    value: Matrix,
}

/// A recording of one forward pass.
pub struct Tape<'a> {
    params: &'a ParamStore,
    nodes: Vec<Node>,
}

impl<'a> Tape<'a> {
    pub fn new(params: &'a ParamStore) -> Self {
        Tape {
            params,
            nodes: Vec::new(),
        }
    }

    pub fn value(&self, id: NodeId) -> &Matrix {
        &self.nodes[id].value
    }

    /// The scalar held by a `1 x 1` node.
    pub fn scalar(&self, id: NodeId) -> f64 {
        let v = self.value(id);
        assert_eq!(v.shape(), (1, 1), "node is not a scalar");
        v.at(0, 0)
    }

    fn push(&mut self, op: Op, inputs: Vec<NodeId>, value: Matrix) -> NodeId {
        self.nodes.push(Node { op, inputs, value });
        self.nodes.len() - 1
    }

    pub fn constant(&mut self, value: Matrix) -> NodeId {
        self.push(Op::Const, Vec::new(), value)
    }

    pub fn param(&mut self, name: &str) -> NodeId {
        let value = self.params.materialize(name);
        self.push(
            Op::Param {
                name: String::from(name),
            },
            Vec::new(),
            value,
        )
    }

    pub fn gather_rows(&mut self, x: NodeId, indices: Vec<usize>) -> NodeId {
        let src = self.value(x);
        let mut value = Matrix::zeros(indices.len(), src.cols());
        for (i, &r) in indices.iter().enumerate() {
            assert!(r < src.rows(), "gather index {r} out of range");
            value.row_mut(i).copy_from_slice(src.row(r));
        }
        self.push(Op::GatherRows { indices }, alloc::vec![x], value)
    }

    pub fn add(&mut self, a: NodeId, b: NodeId) -> NodeId {
        assert_eq!(self.value(a).shape(), self.value(b).shape(), "add shapes");
        let mut value = self.value(a).clone();
        value.add_assign(self.value(b));
        self.push(Op::Add, alloc::vec![a, b], value)
    }

    pub fn add_row(&mut self, a: NodeId, bias: NodeId) -> NodeId {
        let (_, c) = self.value(a).shape();
        assert_eq!(self.value(bias).shape(), (1, c), "row-bias shape");
        let mut value = self.value(a).clone();
        let b = self.value(bias).row(0).to_vec();
        for r in 0..value.rows() {
            for (v, add) in value.row_mut(r).iter_mut().zip(b.iter()) {
                *v += add;
            }
        }
        self.push(Op::AddRowBroadcast, alloc::vec![a, bias], value)
    }

    pub fn add_col(&mut self, a: NodeId, bias: NodeId) -> NodeId {
        let (r, _) = self.value(a).shape();
        assert_eq!(self.value(bias).shape(), (r, 1), "column-bias shape");
        let mut value = self.value(a).clone();
        for row in 0..r {
            let add = self.nodes[bias].value.at(row, 0);
            for v in value.row_mut(row) {
                *v += add;
            }
        }
        self.push(Op::AddColBroadcast, alloc::vec![a, bias], value)
    }

    pub fn mul(&mut self, a: NodeId, b: NodeId) -> NodeId {
        assert_eq!(self.value(a).shape(), self.value(b).shape(), "mul shapes");
        let mut value = self.value(a).clone();
        for (v, w) in value.data_mut().iter_mut().zip(self.nodes[b].value.data()) {
            *v *= w;
        }
        self.push(Op::Mul, alloc::vec![a, b], value)
    }

    pub fn mul_row(&mut self, a: NodeId, gain: NodeId) -> NodeId {
        let (_, c) = self.value(a).shape();
        assert_eq!(self.value(gain).shape(), (1, c), "row-gain shape");
        let mut value = self.value(a).clone();
        let g = self.value(gain).row(0).to_vec();
        for r in 0..value.rows() {
            for (v, gain) in value.row_mut(r).iter_mut().zip(g.iter()) {
                *v *= gain;
            }
        }
        self.push(Op::MulRowBroadcast, alloc::vec![a, gain], value)
    }

    pub fn scale(&mut self, a: NodeId, factor: f64) -> NodeId {
        let mut value = self.value(a).clone();
        value.scale_assign(factor);
        self.push(Op::Scale { factor }, alloc::vec![a], value)
    }

    pub fn matmul(&mut self, a: NodeId, b: NodeId, ta: bool, tb: bool) -> NodeId {
        let value = matmul(self.value(a), self.value(b), ta, tb);
        self.push(Op::MatMul { ta, tb }, alloc::vec![a, b], value)
    }

    pub fn relu(&mut self, a: NodeId) -> NodeId {
        let mut value = self.value(a).clone();
        for v in value.data_mut() {
            if *v < 0.0 {
                *v = 0.0;
            }
        }
        self.push(Op::Relu, alloc::vec![a], value)
    }

    pub fn row_softmax(&mut self, a: NodeId) -> NodeId {
        let x = self.value(a);
        let mut value = Matrix::zeros(x.rows(), x.cols());
        for r in 0..x.rows() {
            let row = x.row(r);
            let max = row.iter().cloned().fold(f64::NEG_INFINITY, f64::max);
            let out = value.row_mut(r);
            let mut sum = 0.0;
            for (o, &v) in out.iter_mut().zip(row) {
                *o = fmath::exp(v - max);
                sum += *o;
            }
            for o in out.iter_mut() {
                *o /= sum;
            }
        }
        self.push(Op::RowSoftmax, alloc::vec![a], value)
    }

    pub fn row_log_softmax(&mut self, a: NodeId) -> NodeId {
        let x = self.value(a);
        let mut value = Matrix::zeros(x.rows(), x.cols());
        for r in 0..x.rows() {
            let row = x.row(r);
            let max = row.iter().cloned().fold(f64::NEG_INFINITY, f64::max);
            let mut sum = 0.0;
            for &v in row {
                sum += fmath::exp(v - max);
            }
            let lse = max + fmath::ln(sum);
            for (o, &v) in value.row_mut(r).iter_mut().zip(row) {
                *o = v - lse;
            }
        }
        self.push(Op::RowLogSoftmax, alloc::vec![a], value)
    }

    pub fn layer_norm(&mut self, a: NodeId) -> NodeId {
        let eps = 1e-5;
        let x = self.value(a);
        let mut value = Matrix::zeros(x.rows(), x.cols());
        for r in 0..x.rows() {
            let row = x.row(r);
            let (mean, std) = row_mean_std(row, eps);
            for (o, &v) in value.row_mut(r).iter_mut().zip(row) {
                *o = (v - mean) / std;
            }
        }
        self.push(Op::LayerNorm { eps }, alloc::vec![a], value)
    }

    pub fn mean_rows(&mut self, a: NodeId) -> NodeId {
        let x = self.value(a);
        assert!(x.rows() > 0, "mean over zero rows");
        let mut value = Matrix::zeros(1, x.cols());
        for r in 0..x.rows() {
            for (o, &v) in value.row_mut(0).iter_mut().zip(x.row(r)) {
                *o += v;
            }
        }
        value.scale_assign(1.0 / x.rows() as f64);
        self.push(Op::MeanRows, alloc::vec![a], value)
    }

    pub fn row_sum(&mut self, a: NodeId) -> NodeId {
        let x = self.value(a);
        let mut value = Matrix::zeros(x.rows(), 1);
        for r in 0..x.rows() {
            value.set(r, 0, x.row(r).iter().sum());
        }
        self.push(Op::RowSum, alloc::vec![a], value)
    }

    pub fn l2_normalize_rows(&mut self, a: NodeId) -> NodeId {
        let eps = 1e-12;
        let x = self.value(a);
        let mut value = x.clone();
        for r in 0..value.rows() {
            let norm = row_norm(value.row(r)).max(eps);
            for v in value.row_mut(r) {
                *v /= norm;
            }
        }
        self.push(Op::L2NormalizeRows { eps }, alloc::vec![a], value)
    }

    pub fn slice_rows(&mut self, a: NodeId, start: usize, end: usize) -> NodeId {
        let x = self.value(a);
        assert!(start < end && end <= x.rows(), "row slice out of range");
        let mut value = Matrix::zeros(end - start, x.cols());
        for r in start..end {
            value.row_mut(r - start).copy_from_slice(x.row(r));
        }
        self.push(Op::SliceRows { start }, alloc::vec![a], value)
    }

    pub fn slice_cols(&mut self, a: NodeId, start: usize, end: usize) -> NodeId {
        let x = self.value(a);
        assert!(start < end && end <= x.cols(), "column slice out of range");
        let mut value = Matrix::zeros(x.rows(), end - start);
        for r in 0..x.rows() {
            value.row_mut(r).copy_from_slice(&x.row(r)[start..end]);
        }
        self.push(Op::SliceCols { start }, alloc::vec![a], value)
    }

    pub fn concat_rows(&mut self, parts: &[NodeId]) -> NodeId {
        assert!(!parts.is_empty());
        let cols = self.value(parts[0]).cols();
        let rows: usize = parts.iter().map(|&p| self.value(p).rows()).sum();
        let mut value = Matrix::zeros(rows, cols);
        let mut at = 0;
        for &p in parts {
            let x = self.value(p);
            assert_eq!(x.cols(), cols, "concat_rows column mismatch");
            for r in 0..x.rows() {
                value.row_mut(at + r).copy_from_slice(x.row(r));
            }
            at += x.rows();
        }
        self.push(Op::ConcatRows, parts.to_vec(), value)
    }

    pub fn concat_cols(&mut self, parts: &[NodeId]) -> NodeId {
        assert!(!parts.is_empty());
        let rows = self.value(parts[0]).rows();
        let cols: usize = parts.iter().map(|&p| self.value(p).cols()).sum();
        let mut value = Matrix::zeros(rows, cols);
        let mut at = 0;
        for &p in parts {
            let x = self.value(p);
            assert_eq!(x.rows(), rows, "concat_cols row mismatch");
            for r in 0..rows {
                value.row_mut(r)[at..at + x.cols()].copy_from_slice(x.row(r));
            }
            at += x.cols();
        }
        self.push(Op::ConcatCols, parts.to_vec(), value)
    }

    pub fn nll_mean(&mut self, log_probs: NodeId, targets: Vec<usize>) -> NodeId {
        let x = self.value(log_probs);
        assert_eq!(x.rows(), targets.len(), "one target per row required");
        let mut total = 0.0;
        for (r, &t) in targets.iter().enumerate() {
            assert!(t < x.cols(), "target {t} out of range");
            total -= x.at(r, t);
        }
        let value = Matrix::from_vec(1, 1, alloc::vec![total / targets.len() as f64]);
        self.push(Op::NllMean { targets }, alloc::vec![log_probs], value)
    }

    /// Reverse sweep from a scalar loss node. Returns gradients for every
    /// parameter the loss depends on; fails if any of them is non-finite.
    pub fn backward(&self, loss: NodeId) -> Result<Gradients, GradError> {
        assert_eq!(self.value(loss).shape(), (1, 1), "loss must be a scalar");
        let mut grads: Vec<Option<Matrix>> = alloc::vec![None; self.nodes.len()];
        grads[loss] = Some(Matrix::from_vec(1, 1, alloc::vec![1.0]));

        let mut out = Gradients::new();
        for id in (0..=loss).rev() {
            let grad = match grads[id].take() {
                Some(g) => g,
                None => continue,
            };
            let node = &self.nodes[id];
            match &node.op {
                Op::Const => {}
                Op::Param { name } => {
                    out.accumulate(name, &grad);
                }
                _ => self.backprop_op(id, &grad, &mut grads),
            }
        }

        for (name, grad) in out.iter() {
            if !grad.is_finite() {
                return Err(GradError::NotFinite {
                    name: String::from(name),
                });
            }
        }
        Ok(out)
    }

    /// Distribute `grad` of node `id` onto its inputs.
    fn backprop_op(&self, id: NodeId, grad: &Matrix, grads: &mut [Option<Matrix>]) {
        let node = &self.nodes[id];
        let input = |k: usize| &self.nodes[node.inputs[k]].value;
        let send = |slot: usize, delta: Matrix, grads: &mut [Option<Matrix>]| {
            let target = node.inputs[slot];
            match &mut grads[target] {
                Some(existing) => existing.add_assign(&delta),
                none => *none = Some(delta),
            }
        };

        match &node.op {
            Op::Const | Op::Param { .. } => unreachable!("leaves handled by caller"),
            Op::GatherRows { indices } => {
                let src = input(0);
                let mut d = Matrix::zeros(src.rows(), src.cols());
                for (i, &r) in indices.iter().enumerate() {
                    for (o, &g) in d.row_mut(r).iter_mut().zip(grad.row(i)) {
                        *o += g;
                    }
                }
                send(0, d, grads);
            }
            Op::Add => {
                send(0, grad.clone(), grads);
                send(1, grad.clone(), grads);
            }
            Op::AddRowBroadcast => {
                send(0, grad.clone(), grads);
                let mut d = Matrix::zeros(1, grad.cols());
                for r in 0..grad.rows() {
                    for (o, &g) in d.row_mut(0).iter_mut().zip(grad.row(r)) {
                        *o += g;
                    }
                }
                send(1, d, grads);
            }
            Op::AddColBroadcast => {
                send(0, grad.clone(), grads);
                let mut d = Matrix::zeros(grad.rows(), 1);
                for r in 0..grad.rows() {
                    d.set(r, 0, grad.row(r).iter().sum());
                }
                send(1, d, grads);
            }
            Op::Mul => {
                let mut da = grad.clone();
                for (v, &w) in da.data_mut().iter_mut().zip(input(1).data()) {
                    *v *= w;
                }
                send(0, da, grads);
                let mut db = grad.clone();
                for (v, &w) in db.data_mut().iter_mut().zip(input(0).data()) {
                    *v *= w;
                }
                send(1, db, grads);
            }
            Op::MulRowBroadcast => {
                let gain = input(1).row(0).to_vec();
                let mut da = grad.clone();
                for r in 0..da.rows() {
                    for (v, g) in da.row_mut(r).iter_mut().zip(gain.iter()) {
                        *v *= g;
                    }
                }
                send(0, da, grads);
                let a = input(0);
                let mut dg = Matrix::zeros(1, grad.cols());
                for r in 0..grad.rows() {
                    for ((o, &g), &x) in dg.row_mut(0).iter_mut().zip(grad.row(r)).zip(a.row(r)) {
                        *o += g * x;
                    }
                }
                send(1, dg, grads);
            }
            Op::Scale { factor } => {
                let mut d = grad.clone();
                d.scale_assign(*factor);
                send(0, d, grads);
            }
            Op::MatMul { ta, tb } => {
                let (a, b) = (input(0), input(1));
                // For C = op(A) op(B): each operand's gradient is the
                // product of the output gradient with the other operand,
                // transposed as dictated by the four flag cases.
                let (da, db) = match (ta, tb) {
                    (false, false) => (matmul(grad, b, false, true), matmul(a, grad, true, false)),
                    (true, false) => (matmul(b, grad, false, true), matmul(a, grad, false, false)),
                    (false, true) => (matmul(grad, b, false, false), matmul(grad, a, true, false)),
                    (true, true) => (matmul(b, grad, true, true), matmul(grad, a, true, true)),
                };
                send(0, da, grads);
                send(1, db, grads);
            }
            Op::Relu => {
                let mut d = grad.clone();
                for (v, &x) in d.data_mut().iter_mut().zip(input(0).data()) {
                    if x <= 0.0 {
                        *v = 0.0;
                    }
                }
                send(0, d, grads);
            }
            Op::RowSoftmax => {
                // y = softmax(x): dx = y * (dy - sum(dy * y)) per row.
                let y = &node.value;
                let mut d = Matrix::zeros(y.rows(), y.cols());
                for r in 0..y.rows() {
                    let dot: f64 = grad.row(r).iter().zip(y.row(r)).map(|(g, v)| g * v).sum();
                    for ((o, &g), &v) in d.row_mut(r).iter_mut().zip(grad.row(r)).zip(y.row(r)) {
                        *o = v * (g - dot);
                    }
                }
                send(0, d, grads);
            }
            Op::RowLogSoftmax => {
                // y = log_softmax(x): dx = dy - exp(y) * sum(dy) per row.
                let y = &node.value;
                let mut d = Matrix::zeros(y.rows(), y.cols());
                for r in 0..y.rows() {
                    let total: f64 = grad.row(r).iter().sum();
                    for ((o, &g), &v) in d.row_mut(r).iter_mut().zip(grad.row(r)).zip(y.row(r)) {
                        *o = g - fmath::exp(v) * total;
                    }
                }
                send(0, d, grads);
            }
            Op::LayerNorm { eps } => {
                // With y = (x - mean) / std:
                // dx = (dy - mean(dy) - y * mean(dy * y)) / std, per row.
                let x = input(0);
                let y = &node.value;
                let c = x.cols() as f64;
                let mut d = Matrix::zeros(x.rows(), x.cols());
                for r in 0..x.rows() {
                    let (_, std) = row_mean_std(x.row(r), *eps);
                    let g_mean: f64 = grad.row(r).iter().sum::<f64>() / c;
                    let gy_mean: f64 = grad
                        .row(r)
                        .iter()
                        .zip(y.row(r))
                        .map(|(g, v)| g * v)
                        .sum::<f64>()
                        / c;
                    for ((o, &g), &v) in d.row_mut(r).iter_mut().zip(grad.row(r)).zip(y.row(r)) {
                        *o = (g - g_mean - v * gy_mean) / std;
                    }
                }
                send(0, d, grads);
            }
            Op::MeanRows => {
                let rows = input(0).rows();
                let mut d = Matrix::zeros(rows, grad.cols());
                let inv = 1.0 / rows as f64;
                for r in 0..rows {
                    for (o, &g) in d.row_mut(r).iter_mut().zip(grad.row(0)) {
                        *o = g * inv;
                    }
                }
                send(0, d, grads);
            }
            Op::RowSum => {
                let x = input(0);
                let mut d = Matrix::zeros(x.rows(), x.cols());
                for r in 0..x.rows() {
                    let g = grad.at(r, 0);
                    for o in d.row_mut(r) {
                        *o = g;
                    }
                }
                send(0, d, grads);
            }
            Op::L2NormalizeRows { eps } => {
                // y = x / n with n = max(||x||, eps).
                // Above the floor: dx = (dy - y * (dy . y)) / n;
                // below it n is a constant, so dx = dy / eps.
                let x = input(0);
                let y = &node.value;
                let mut d = Matrix::zeros(x.rows(), x.cols());
                for r in 0..x.rows() {
                    let norm = row_norm(x.row(r));
                    if norm > *eps {
                        let dot: f64 = grad.row(r).iter().zip(y.row(r)).map(|(g, v)| g * v).sum();
                        for ((o, &g), &v) in d.row_mut(r).iter_mut().zip(grad.row(r)).zip(y.row(r))
                        {
                            *o = (g - v * dot) / norm;
                        }
                    } else {
                        for (o, &g) in d.row_mut(r).iter_mut().zip(grad.row(r)) {
                            *o = g / eps;
                        }
                    }
                }
                send(0, d, grads);
            }
            Op::SliceRows { start } => {
                let x = input(0);
                let mut d = Matrix::zeros(x.rows(), x.cols());
                for r in 0..grad.rows() {
                    d.row_mut(start + r).copy_from_slice(grad.row(r));
                }
                send(0, d, grads);
            }
            Op::SliceCols { start } => {
                let x = input(0);
                let mut d = Matrix::zeros(x.rows(), x.cols());
                for r in 0..grad.rows() {
                    d.row_mut(r)[*start..start + grad.cols()].copy_from_slice(grad.row(r));
                }
                send(0, d, grads);
            }
            Op::ConcatRows => {
                let mut at = 0;
                for slot in 0..node.inputs.len() {
                    let rows = input(slot).rows();
                    let mut d = Matrix::zeros(rows, grad.cols());
                    for r in 0..rows {
                        d.row_mut(r).copy_from_slice(grad.row(at + r));
                    }
                    at += rows;
                    send(slot, d, grads);
                }
            }
            Op::ConcatCols => {
                let mut at = 0;
                for slot in 0..node.inputs.len() {
                    let cols = input(slot).cols();
                    let mut d = Matrix::zeros(grad.rows(), cols);
                    for r in 0..grad.rows() {
                        d.row_mut(r).copy_from_slice(&grad.row(r)[at..at + cols]);
                    }
                    at += cols;
                    send(slot, d, grads);
                }
            }
            Op::NllMean { targets } => {
                let x = input(0);
                let g = grad.at(0, 0);
                let mut d = Matrix::zeros(x.rows(), x.cols());
                let inv = 1.0 / targets.len() as f64;
                for (r, &t) in targets.iter().enumerate() {
                    d.set(r, t, -g * inv);
                }
                send(0, d, grads);
            }
        }
    }
}

fn row_mean_std(row: &[f64], eps: f64) -> (f64, f64) {
    let c = row.len() as f64;
    let mean = row.iter().sum::<f64>() / c;
    let var = row.iter().map(|&v| (v - mean) * (v - mean)).sum::<f64>() / c;
    (mean, fmath::sqrt(var + eps))
}

fn row_norm(row: &[f64]) -> f64 {
    fmath::sqrt(row.iter().map(|&v| v * v).sum())
}
