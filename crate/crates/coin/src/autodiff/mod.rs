//! Reverse-mode automatic differentiation over dense f64 tensors.
//!
//! A [`Tape`] records every primitive applied to tracked tensors as an
//! append-only DAG of [`Var`] nodes. [`Tape::backward`] replays the tape in
//! reverse creation order (a reverse topological order, since inputs always
//! precede their consumers), accumulating vector-Jacobian products. The
//! primitive set is closed: everything the model and losses need is
//! expressible through [`PrimitiveKind`].
//!
//! A tape and its tensors belong to one thread; independent tapes may run
//! concurrently. Gradient accumulation order is fixed by node index, so
//! repeated backward passes over one tape are bitwise identical.

mod check;
mod tensor;
#[cfg(test)]
mod tests;

pub use check::{finite_difference_check, finite_difference_check_many, BoundParams, FdReport};
pub use tensor::Tensor;

use thiserror::Error;

/// Variance stabilizer added before the square root in `layer_norm_rows`.
pub const LAYER_NORM_EPS: f64 = 1e-5;

/// Additive penalty for masked (future) attention scores. Large enough that
/// masked entries underflow to exactly 0 in the row softmax, small enough to
/// keep every tensor finite.
pub const CAUSAL_MASK_PENALTY: f64 = -1e30;

#[derive(Debug, Error, PartialEq)]
pub enum AdError {
    #[error("{primitive}: shape mismatch between {lhs:?} and {rhs:?}")]
    ShapeMismatch { primitive: &'static str, lhs: Vec<usize>, rhs: Vec<usize> },
    #[error("{primitive}: unsupported input shape {shape:?}")]
    Unsupported { primitive: &'static str, shape: Vec<usize> },
    #[error("{primitive}: expected {expected} inputs, got {got}")]
    Arity { primitive: &'static str, expected: usize, got: usize },
    #[error("{primitive}: domain error: {detail}")]
    Domain { primitive: &'static str, detail: String },
    #[error("backward root must be scalar (shape [1]), got {shape:?}")]
    NonScalarRoot { shape: Vec<usize> },
    #[error("invalid tensor shape {shape:?}")]
    BadShape { shape: Vec<usize> },
    #[error("shape {shape:?} does not match data length {len}")]
    ShapeDataMismatch { shape: Vec<usize>, len: usize },
    #[error("finite-difference oracle invalid: {0}")]
    OracleInvalid(String),
}

/// Handle to a node on a [`Tape`].
#[derive(Debug, Clone, Copy, PartialEq, Eq, Hash)]
pub struct Var(u32);

impl Var {
    fn index(self) -> usize {
        self.0 as usize
    }
}

/// Identifier of a forward primitive, carrying any non-tensor arguments.
#[derive(Debug, Clone)]
pub enum PrimitiveKind {
    Matmul,
    Add,
    Mul,
    Scale(f64),
    Exp,
    Log,
    Tanh,
    SoftmaxRows,
    LayerNormRows,
    EmbeddingLookup(Vec<usize>),
    ConcatRows,
    SliceRows { start: usize, rows: usize },
    Sum,
    Mean,
    Transpose,
    CausalMaskAdd,
}

#[derive(Debug, Clone)]
enum Op {
    Leaf,
    Matmul(Var, Var),
    Add(Var, Var),
    Mul(Var, Var),
    Scale(Var, f64),
    Exp(Var),
    Log(Var),
    Tanh(Var),
    SoftmaxRows(Var),
    LayerNormRows(Var),
    EmbeddingLookup { table: Var, ids: Vec<usize> },
    ConcatRows(Vec<Var>),
    SliceRows { input: Var, start: usize },
    Sum(Var),
    Mean(Var),
    Transpose(Var),
    CausalMaskAdd(Var),
}

struct Node {
    value: Tensor,
    op: Op,
}

/// Gradients produced by [`Tape::backward`], indexed by [`Var`].
pub struct Gradients {
    grads: Vec<Option<Vec<f64>>>,
}

impl Gradients {
    /// Gradient data for `v`, if any gradient reached it.
    pub fn get(&self, v: Var) -> Option<&[f64]> {
        self.grads.get(v.index()).and_then(|g| g.as_deref())
    }

    /// Gradient tensor for `v`; zeros when `v` is unreachable from the root.
    pub fn grad_or_zeros(&self, tape: &Tape, v: Var) -> Tensor {
        let shape = tape.value(v).shape().to_vec();
        match self.get(v) {
            Some(g) => Tensor::new(shape, g.to_vec()).expect("gradient shape matches value"),
            None => Tensor::zeros(shape),
        }
    }
}

/// Append-only record of a forward computation.
#[derive(Default)]
pub struct Tape {
    nodes: Vec<Node>,
}

impl Tape {
    pub fn new() -> Self {
        Tape { nodes: Vec::new() }
    }

    pub fn len(&self) -> usize {
        self.nodes.len()
    }

    pub fn is_empty(&self) -> bool {
        self.nodes.is_empty()
    }

    /// Inserts a tensor as an untracked leaf.
    pub fn constant(&mut self, t: Tensor) -> Var {
        self.push(t, Op::Leaf)
    }

    /// Inserts a tensor as a tracked leaf (a trainable parameter).
    pub fn param(&mut self, t: Tensor) -> Var {
        self.push(t.with_grad(), Op::Leaf)
    }

    pub fn value(&self, v: Var) -> &Tensor {
        &self.nodes[v.index()].value
    }

    pub fn data(&self, v: Var) -> &[f64] {
        self.nodes[v.index()].value.data()
    }

    /// Scalar forward value of a shape-[1] node.
    pub fn scalar_value(&self, v: Var) -> f64 {
        self.nodes[v.index()].value.item()
    }

    fn push(&mut self, value: Tensor, op: Op) -> Var {
        let idx = self.nodes.len();
        assert!(idx <= u32::MAX as usize, "tape overflow");
        self.nodes.push(Node { value, op });
        Var(idx as u32)
    }

    fn requires_grad(&self, v: Var) -> bool {
        self.nodes[v.index()].value.requires_grad()
    }

    /// Records `value` as the result of `op` if any input is tracked;
    /// otherwise stores it as a plain leaf so backward skips it.
    fn record(&mut self, mut value: Tensor, tracked: bool, op: Op) -> Var {
        if tracked {
            value = value.with_grad();
            self.push(value, op)
        } else {
            self.push(value, Op::Leaf)
        }
    }

    // ── Forward primitives ───────────────────────────────────────────

    /// `[m,k] @ [k,n] -> [m,n]`.
    pub fn matmul(&mut self, a: Var, b: Var) -> Result<Var, AdError> {
        let (ta, tb) = (self.value(a), self.value(b));
        let ((m, k), (k2, n)) = match (ta.dims2(), tb.dims2()) {
            (Some(x), Some(y)) => (x, y),
            _ => {
                return Err(AdError::ShapeMismatch {
                    primitive: "matmul",
                    lhs: ta.shape().to_vec(),
                    rhs: tb.shape().to_vec(),
                })
            }
        };
        if k != k2 {
            return Err(AdError::ShapeMismatch {
                primitive: "matmul",
                lhs: ta.shape().to_vec(),
                rhs: tb.shape().to_vec(),
            });
        }
        let mut out = vec![0.0; m * n];
        kernels::matmul_accum(ta.data(), tb.data(), m, k, n, &mut out);
        let tracked = self.requires_grad(a) || self.requires_grad(b);
        Ok(self.record(Tensor::new(vec![m, n], out)?, tracked, Op::Matmul(a, b)))
    }

    /// Elementwise sum of two same-shape tensors.
    pub fn add(&mut self, a: Var, b: Var) -> Result<Var, AdError> {
        let (ta, tb) = (self.value(a), self.value(b));
        if ta.shape() != tb.shape() {
            return Err(AdError::ShapeMismatch {
                primitive: "add",
                lhs: ta.shape().to_vec(),
                rhs: tb.shape().to_vec(),
            });
        }
        let data = ta.data().iter().zip(tb.data()).map(|(x, y)| x + y).collect();
        let shape = ta.shape().to_vec();
        let tracked = self.requires_grad(a) || self.requires_grad(b);
        Ok(self.record(Tensor::new(shape, data)?, tracked, Op::Add(a, b)))
    }

    /// Elementwise product of two same-shape tensors.
    pub fn mul(&mut self, a: Var, b: Var) -> Result<Var, AdError> {
        let (ta, tb) = (self.value(a), self.value(b));
        if ta.shape() != tb.shape() {
            return Err(AdError::ShapeMismatch {
                primitive: "mul",
                lhs: ta.shape().to_vec(),
                rhs: tb.shape().to_vec(),
            });
        }
        let data = ta.data().iter().zip(tb.data()).map(|(x, y)| x * y).collect();
        let shape = ta.shape().to_vec();
        let tracked = self.requires_grad(a) || self.requires_grad(b);
        Ok(self.record(Tensor::new(shape, data)?, tracked, Op::Mul(a, b)))
    }

    /// Multiplies every entry by the constant `c`.
    pub fn scale(&mut self, x: Var, c: f64) -> Result<Var, AdError> {
        let tx = self.value(x);
        let data = tx.data().iter().map(|v| v * c).collect();
        let shape = tx.shape().to_vec();
        let tracked = self.requires_grad(x);
        Ok(self.record(Tensor::new(shape, data)?, tracked, Op::Scale(x, c)))
    }

    pub fn exp(&mut self, x: Var) -> Result<Var, AdError> {
        let tx = self.value(x);
        let data: Vec<f64> = tx.data().iter().map(|v| v.exp()).collect();
        if data.iter().any(|v| !v.is_finite()) {
            return Err(AdError::Domain {
                primitive: "exp",
                detail: "overflow to non-finite value".into(),
            });
        }
        let shape = tx.shape().to_vec();
        let tracked = self.requires_grad(x);
        Ok(self.record(Tensor::new(shape, data)?, tracked, Op::Exp(x)))
    }

    pub fn log(&mut self, x: Var) -> Result<Var, AdError> {
        let tx = self.value(x);
        if let Some(bad) = tx.data().iter().find(|v| **v <= 0.0) {
            return Err(AdError::Domain {
                primitive: "log",
                detail: format!("log of non-positive value {bad}"),
            });
        }
        let data = tx.data().iter().map(|v| v.ln()).collect();
        let shape = tx.shape().to_vec();
        let tracked = self.requires_grad(x);
        Ok(self.record(Tensor::new(shape, data)?, tracked, Op::Log(x)))
    }

    pub fn tanh(&mut self, x: Var) -> Result<Var, AdError> {
        let tx = self.value(x);
        let data = tx.data().iter().map(|v| v.tanh()).collect();
        let shape = tx.shape().to_vec();
        let tracked = self.requires_grad(x);
        Ok(self.record(Tensor::new(shape, data)?, tracked, Op::Tanh(x)))
    }

    /// Max-shifted softmax applied independently to each row of `[m,n]`.
    pub fn softmax_rows(&mut self, x: Var) -> Result<Var, AdError> {
        let tx = self.value(x);
        let (m, n) = tx.dims2().ok_or_else(|| AdError::Unsupported {
            primitive: "softmax_rows",
            shape: tx.shape().to_vec(),
        })?;
        let mut data = vec![0.0; m * n];
        for (row_out, row_in) in data.chunks_exact_mut(n).zip(tx.data().chunks_exact(n)) {
            let max = row_in.iter().copied().fold(f64::NEG_INFINITY, f64::max);
            let mut z = 0.0;
            for (o, &v) in row_out.iter_mut().zip(row_in) {
                let e = (v - max).exp();
                *o = e;
                z += e;
            }
            let inv = 1.0 / z;
            for o in row_out.iter_mut() {
                *o *= inv;
            }
        }
        let tracked = self.requires_grad(x);
        Ok(self.record(Tensor::new(vec![m, n], data)?, tracked, Op::SoftmaxRows(x)))
    }

    /// Per-row standardization `(x - mean) / sqrt(var + EPS)` of `[m,n]`.
    /// Affine terms are composed outside with `mul`/`add`.
    pub fn layer_norm_rows(&mut self, x: Var) -> Result<Var, AdError> {
        let tx = self.value(x);
        let (m, n) = tx.dims2().ok_or_else(|| AdError::Unsupported {
            primitive: "layer_norm_rows",
            shape: tx.shape().to_vec(),
        })?;
        let mut data = vec![0.0; m * n];
        let inv_n = 1.0 / n as f64;
        for (row_out, row_in) in data.chunks_exact_mut(n).zip(tx.data().chunks_exact(n)) {
            let mean = row_in.iter().sum::<f64>() * inv_n;
            let var = row_in.iter().map(|v| (v - mean) * (v - mean)).sum::<f64>() * inv_n;
            let inv_std = 1.0 / (var + LAYER_NORM_EPS).sqrt();
            for (o, &v) in row_out.iter_mut().zip(row_in) {
                *o = (v - mean) * inv_std;
            }
        }
        let tracked = self.requires_grad(x);
        Ok(self.record(Tensor::new(vec![m, n], data)?, tracked, Op::LayerNormRows(x)))
    }

    /// Gathers rows of `table [v,d]` at `ids`, producing `[len(ids), d]`.
    pub fn embedding_lookup(&mut self, table: Var, ids: &[usize]) -> Result<Var, AdError> {
        let tt = self.value(table);
        let (v, d) = tt.dims2().ok_or_else(|| AdError::Unsupported {
            primitive: "embedding_lookup",
            shape: tt.shape().to_vec(),
        })?;
        if ids.is_empty() {
            return Err(AdError::Domain {
                primitive: "embedding_lookup",
                detail: "empty id list".into(),
            });
        }
        if let Some(&bad) = ids.iter().find(|&&id| id >= v) {
            return Err(AdError::Domain {
                primitive: "embedding_lookup",
                detail: format!("id {bad} out of range for table with {v} rows"),
            });
        }
        let mut data = Vec::with_capacity(ids.len() * d);
        for &id in ids {
            data.extend_from_slice(&tt.data()[id * d..(id + 1) * d]);
        }
        let tracked = self.requires_grad(table);
        Ok(self.record(
            Tensor::new(vec![ids.len(), d], data)?,
            tracked,
            Op::EmbeddingLookup { table, ids: ids.to_vec() },
        ))
    }

    /// Stacks inputs along axis 0. Rank-1 inputs concatenate into a longer
    /// vector; rank-2 inputs must share a column count.
    pub fn concat_rows(&mut self, inputs: &[Var]) -> Result<Var, AdError> {
        if inputs.is_empty() {
            return Err(AdError::Arity { primitive: "concat_rows", expected: 1, got: 0 });
        }
        let first_shape = self.value(inputs[0]).shape().to_vec();
        let rank = first_shape.len();
        let mut data = Vec::new();
        let mut rows = 0usize;
        for &v in inputs {
            let t = self.value(v);
            if t.shape().len() != rank
                || (rank == 2 && t.shape()[1] != first_shape[1])
            {
                return Err(AdError::ShapeMismatch {
                    primitive: "concat_rows",
                    lhs: first_shape,
                    rhs: t.shape().to_vec(),
                });
            }
            rows += t.shape()[0];
            data.extend_from_slice(t.data());
        }
        let shape = if rank == 1 { vec![rows] } else { vec![rows, first_shape[1]] };
        let tracked = inputs.iter().any(|&v| self.requires_grad(v));
        Ok(self.record(Tensor::new(shape, data)?, tracked, Op::ConcatRows(inputs.to_vec())))
    }

    /// Rows `start..start+rows` of a rank-2 tensor.
    pub fn slice_rows(&mut self, x: Var, start: usize, rows: usize) -> Result<Var, AdError> {
        let tx = self.value(x);
        let (m, n) = tx.dims2().ok_or_else(|| AdError::Unsupported {
            primitive: "slice_rows",
            shape: tx.shape().to_vec(),
        })?;
        if rows == 0 || start + rows > m {
            return Err(AdError::Domain {
                primitive: "slice_rows",
                detail: format!("rows {start}..{} out of range for {m} rows", start + rows),
            });
        }
        let data = tx.data()[start * n..(start + rows) * n].to_vec();
        let tracked = self.requires_grad(x);
        Ok(self.record(Tensor::new(vec![rows, n], data)?, tracked, Op::SliceRows { input: x, start }))
    }

    /// Sum of all entries, shape `[1]`.
    pub fn sum(&mut self, x: Var) -> Result<Var, AdError> {
        let total: f64 = self.value(x).data().iter().sum();
        let tracked = self.requires_grad(x);
        Ok(self.record(Tensor::scalar(total), tracked, Op::Sum(x)))
    }

    /// Mean of all entries, shape `[1]`.
    pub fn mean(&mut self, x: Var) -> Result<Var, AdError> {
        let t = self.value(x);
        let total: f64 = t.data().iter().sum();
        let mean = total / t.numel() as f64;
        let tracked = self.requires_grad(x);
        Ok(self.record(Tensor::scalar(mean), tracked, Op::Mean(x)))
    }

    pub fn transpose(&mut self, x: Var) -> Result<Var, AdError> {
        let tx = self.value(x);
        let (m, n) = tx.dims2().ok_or_else(|| AdError::Unsupported {
            primitive: "transpose",
            shape: tx.shape().to_vec(),
        })?;
        let mut data = vec![0.0; m * n];
        kernels::transpose(tx.data(), m, n, &mut data);
        let tracked = self.requires_grad(x);
        Ok(self.record(Tensor::new(vec![n, m], data)?, tracked, Op::Transpose(x)))
    }

    /// Adds [`CAUSAL_MASK_PENALTY`] to every strictly-upper-triangular entry
    /// of a square score matrix, so row softmax zeroes out future positions.
    pub fn causal_mask_add(&mut self, x: Var) -> Result<Var, AdError> {
        let tx = self.value(x);
        let (m, n) = tx.dims2().ok_or_else(|| AdError::Unsupported {
            primitive: "causal_mask_add",
            shape: tx.shape().to_vec(),
        })?;
        if m != n {
            return Err(AdError::Unsupported {
                primitive: "causal_mask_add",
                shape: tx.shape().to_vec(),
            });
        }
        let mut data = tx.data().to_vec();
        for i in 0..m {
            for j in (i + 1)..n {
                data[i * n + j] += CAUSAL_MASK_PENALTY;
            }
        }
        let tracked = self.requires_grad(x);
        Ok(self.record(Tensor::new(vec![m, n], data)?, tracked, Op::CausalMaskAdd(x)))
    }

    /// Uniform dispatcher over the closed primitive set.
    pub fn apply_primitive(&mut self, kind: PrimitiveKind, inputs: &[Var]) -> Result<Var, AdError> {
        fn expect(primitive: &'static str, inputs: &[Var], n: usize) -> Result<(), AdError> {
            if inputs.len() == n {
                Ok(())
            } else {
                Err(AdError::Arity { primitive, expected: n, got: inputs.len() })
            }
        }
        match kind {
            PrimitiveKind::Matmul => {
                expect("matmul", inputs, 2)?;
                self.matmul(inputs[0], inputs[1])
            }
            PrimitiveKind::Add => {
                expect("add", inputs, 2)?;
                self.add(inputs[0], inputs[1])
            }
            PrimitiveKind::Mul => {
                expect("mul", inputs, 2)?;
                self.mul(inputs[0], inputs[1])
            }
            PrimitiveKind::Scale(c) => {
                expect("scale", inputs, 1)?;
                self.scale(inputs[0], c)
            }
            PrimitiveKind::Exp => {
                expect("exp", inputs, 1)?;
                self.exp(inputs[0])
            }
            PrimitiveKind::Log => {
                expect("log", inputs, 1)?;
                self.log(inputs[0])
            }
            PrimitiveKind::Tanh => {
                expect("tanh", inputs, 1)?;
                self.tanh(inputs[0])
            }
            PrimitiveKind::SoftmaxRows => {
                expect("softmax_rows", inputs, 1)?;
                self.softmax_rows(inputs[0])
            }
            PrimitiveKind::LayerNormRows => {
                expect("layer_norm_rows", inputs, 1)?;
                self.layer_norm_rows(inputs[0])
            }
            PrimitiveKind::EmbeddingLookup(ids) => {
                expect("embedding_lookup", inputs, 1)?;
                self.embedding_lookup(inputs[0], &ids)
            }
            PrimitiveKind::ConcatRows => self.concat_rows(inputs),
            PrimitiveKind::SliceRows { start, rows } => {
                expect("slice_rows", inputs, 1)?;
                self.slice_rows(inputs[0], start, rows)
            }
            PrimitiveKind::Sum => {
                expect("sum", inputs, 1)?;
                self.sum(inputs[0])
            }
            PrimitiveKind::Mean => {
                expect("mean", inputs, 1)?;
                self.mean(inputs[0])
            }
            PrimitiveKind::Transpose => {
                expect("transpose", inputs, 1)?;
                self.transpose(inputs[0])
            }
            PrimitiveKind::CausalMaskAdd => {
                expect("causal_mask_add", inputs, 1)?;
                self.causal_mask_add(inputs[0])
            }
        }
    }

    // ── Backward ─────────────────────────────────────────────────────

    /// Accumulates d(root)/d(node) for every tracked node reachable from
    /// `root`. Fan-out adds contributions; accumulation order is the fixed
    /// reverse node order, so results are bitwise reproducible.
    pub fn backward(&self, root: Var) -> Result<Gradients, AdError> {
        let root_val = self.value(root);
        if !root_val.is_scalar() {
            return Err(AdError::NonScalarRoot { shape: root_val.shape().to_vec() });
        }
        let mut grads: Vec<Option<Vec<f64>>> = Vec::with_capacity(root.index() + 1);
        grads.resize_with(root.index() + 1, || None);
        grads[root.index()] = Some(vec![1.0]);

        for idx in (0..=root.index()).rev() {
            if grads[idx].is_none() {
                continue;
            }
            if matches!(self.nodes[idx].op, Op::Leaf) {
                continue; // keep leaf grads for the caller
            }
            let g = grads[idx].take().expect("checked above");
            self.backpropagate(idx, &g, &mut grads);
        }
        Ok(Gradients { grads })
    }

    fn grad_buf<'a>(
        &self,
        grads: &'a mut [Option<Vec<f64>>],
        v: Var,
    ) -> Option<&'a mut [f64]> {
        if !self.requires_grad(v) {
            return None;
        }
        let numel = self.value(v).numel();
        Some(grads[v.index()].get_or_insert_with(|| vec![0.0; numel]))
    }

    fn backpropagate(&self, idx: usize, g: &[f64], grads: &mut [Option<Vec<f64>>]) {
        match &self.nodes[idx].op {
            Op::Leaf => unreachable!("leaves are skipped"),
            Op::Matmul(a, b) => {
                let (m, k) = self.value(*a).dims2().expect("matmul lhs rank 2");
                let n = self.value(*b).dims2().expect("matmul rhs rank 2").1;
                let (a_data, b_data) = (self.value(*a).data(), self.value(*b).data());
                if let Some(da) = self.grad_buf(grads, *a) {
                    kernels::matmul_nt_accum(g, b_data, m, n, k, da);
                }
                if let Some(db) = self.grad_buf(grads, *b) {
                    kernels::matmul_tn_accum(a_data, g, m, k, n, db);
                }
            }
            Op::Add(a, b) => {
                for side in [a, b] {
                    if let Some(d) = self.grad_buf(grads, *side) {
                        for (o, &gi) in d.iter_mut().zip(g) {
                            *o += gi;
                        }
                    }
                }
            }
            Op::Mul(a, b) => {
                let (a, b) = (*a, *b);
                if let Some(da) = self.grad_buf(grads, a) {
                    let bv = self.value(b).data();
                    for ((o, &gi), &bi) in da.iter_mut().zip(g).zip(bv) {
                        *o += gi * bi;
                    }
                }
                if let Some(db) = self.grad_buf(grads, b) {
                    let av = self.value(a).data();
                    for ((o, &gi), &ai) in db.iter_mut().zip(g).zip(av) {
                        *o += gi * ai;
                    }
                }
            }
            Op::Scale(x, c) => {
                let c = *c;
                if let Some(dx) = self.grad_buf(grads, *x) {
                    for (o, &gi) in dx.iter_mut().zip(g) {
                        *o += gi * c;
                    }
                }
            }
            Op::Exp(x) => {
                let y = self.nodes[idx].value.data();
                if let Some(dx) = self.grad_buf(grads, *x) {
                    for ((o, &gi), &yi) in dx.iter_mut().zip(g).zip(y) {
                        *o += gi * yi;
                    }
                }
            }
            Op::Log(x) => {
                let xv = self.value(*x).data();
                if let Some(dx) = self.grad_buf(grads, *x) {
                    for ((o, &gi), &xi) in dx.iter_mut().zip(g).zip(xv) {
                        *o += gi / xi;
                    }
                }
            }
            Op::Tanh(x) => {
                let y = self.nodes[idx].value.data();
                if let Some(dx) = self.grad_buf(grads, *x) {
                    for ((o, &gi), &yi) in dx.iter_mut().zip(g).zip(y) {
                        *o += gi * (1.0 - yi * yi);
                    }
                }
            }
            Op::SoftmaxRows(x) => {
                let y = self.nodes[idx].value.data();
                let n = self.nodes[idx].value.dims2().expect("softmax rank 2").1;
                if let Some(dx) = self.grad_buf(grads, *x) {
                    for ((dx_row, g_row), y_row) in
                        dx.chunks_exact_mut(n).zip(g.chunks_exact(n)).zip(y.chunks_exact(n))
                    {
                        let dot: f64 = g_row.iter().zip(y_row).map(|(a, b)| a * b).sum();
                        for ((o, &gi), &yi) in dx_row.iter_mut().zip(g_row).zip(y_row) {
                            *o += yi * (gi - dot);
                        }
                    }
                }
            }
            Op::LayerNormRows(x) => {
                let y = self.nodes[idx].value.data();
                let n = self.nodes[idx].value.dims2().expect("layer_norm rank 2").1;
                let xv = self.value(*x).data();
                if let Some(dx) = self.grad_buf(grads, *x) {
                    let inv_n = 1.0 / n as f64;
                    for (((dx_row, g_row), y_row), x_row) in dx
                        .chunks_exact_mut(n)
                        .zip(g.chunks_exact(n))
                        .zip(y.chunks_exact(n))
                        .zip(xv.chunks_exact(n))
                    {
                        let mean = x_row.iter().sum::<f64>() * inv_n;
                        let var =
                            x_row.iter().map(|v| (v - mean) * (v - mean)).sum::<f64>() * inv_n;
                        let inv_std = 1.0 / (var + LAYER_NORM_EPS).sqrt();
                        let g_mean = g_row.iter().sum::<f64>() * inv_n;
                        let gy_mean =
                            g_row.iter().zip(y_row).map(|(a, b)| a * b).sum::<f64>() * inv_n;
                        for ((o, &gi), &yi) in dx_row.iter_mut().zip(g_row).zip(y_row) {
                            *o += inv_std * (gi - g_mean - yi * gy_mean);
                        }
                    }
                }
            }
            Op::EmbeddingLookup { table, ids } => {
                let d = self.value(*table).dims2().expect("table rank 2").1;
                if let Some(dt) = self.grad_buf(grads, *table) {
                    for (row, &id) in ids.iter().enumerate() {
                        let src = &g[row * d..(row + 1) * d];
                        let dst = &mut dt[id * d..(id + 1) * d];
                        for (o, &gi) in dst.iter_mut().zip(src) {
                            *o += gi;
                        }
                    }
                }
            }
            Op::ConcatRows(inputs) => {
                let mut offset = 0usize;
                for &inp in inputs {
                    let numel = self.value(inp).numel();
                    if let Some(di) = self.grad_buf(grads, inp) {
                        for (o, &gi) in di.iter_mut().zip(&g[offset..offset + numel]) {
                            *o += gi;
                        }
                    }
                    offset += numel;
                }
            }
            Op::SliceRows { input, start } => {
                let n = self.value(*input).dims2().expect("slice input rank 2").1;
                let start = *start;
                if let Some(dx) = self.grad_buf(grads, *input) {
                    let dst = &mut dx[start * n..start * n + g.len()];
                    for (o, &gi) in dst.iter_mut().zip(g) {
                        *o += gi;
                    }
                }
            }
            Op::Sum(x) => {
                let g0 = g[0];
                if let Some(dx) = self.grad_buf(grads, *x) {
                    for o in dx.iter_mut() {
                        *o += g0;
                    }
                }
            }
            Op::Mean(x) => {
                let scale = g[0] / self.value(*x).numel() as f64;
                if let Some(dx) = self.grad_buf(grads, *x) {
                    for o in dx.iter_mut() {
                        *o += scale;
                    }
                }
            }
            Op::Transpose(x) => {
                let (m, n) = self.value(*x).dims2().expect("transpose rank 2");
                if let Some(dx) = self.grad_buf(grads, *x) {
                    // g has shape [n, m]; scatter back as its transpose.
                    for j in 0..n {
                        let g_row = &g[j * m..(j + 1) * m];
                        for (i, &gi) in g_row.iter().enumerate() {
                            dx[i * n + j] += gi;
                        }
                    }
                }
            }
            Op::CausalMaskAdd(x) => {
                if let Some(dx) = self.grad_buf(grads, *x) {
                    for (o, &gi) in dx.iter_mut().zip(g) {
                        *o += gi;
                    }
                }
            }
        }
    }
}

mod kernels {
    /// `out[m,n] += a[m,k] @ b[k,n]`, ikj order for contiguous inner loops.
    pub fn matmul_accum(a: &[f64], b: &[f64], m: usize, k: usize, n: usize, out: &mut [f64]) {
        for (a_row, out_row) in a.chunks_exact(k).zip(out.chunks_exact_mut(n)).take(m) {
            for (&av, b_row) in a_row.iter().zip(b.chunks_exact(n)) {
                for (o, &bv) in out_row.iter_mut().zip(b_row) {
                    *o += av * bv;
                }
            }
        }
    }

    /// `out[m,k] += g[m,n] @ b[k,n]^T` — row-by-row dot products.
    pub fn matmul_nt_accum(g: &[f64], b: &[f64], m: usize, n: usize, k: usize, out: &mut [f64]) {
        for (g_row, out_row) in g.chunks_exact(n).zip(out.chunks_exact_mut(k)).take(m) {
            for (o, b_row) in out_row.iter_mut().zip(b.chunks_exact(n)) {
                *o += g_row.iter().zip(b_row).map(|(x, y)| x * y).sum::<f64>();
            }
        }
    }

    /// `out[k,n] += a[m,k]^T @ g[m,n]` — axpy over g rows.
    pub fn matmul_tn_accum(a: &[f64], g: &[f64], m: usize, k: usize, n: usize, out: &mut [f64]) {
        for (a_row, g_row) in a.chunks_exact(k).zip(g.chunks_exact(n)).take(m) {
            for (&av, out_row) in a_row.iter().zip(out.chunks_exact_mut(n)) {
                for (o, &gv) in out_row.iter_mut().zip(g_row) {
                    *o += av * gv;
                }
            }
        }
    }

    pub fn transpose(x: &[f64], m: usize, n: usize, out: &mut [f64]) {
        for i in 0..m {
            for j in 0..n {
                out[j * m + i] = x[i * n + j];
            }
        }
    }
}
