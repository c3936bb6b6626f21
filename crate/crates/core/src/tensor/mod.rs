//! Minimal dense f64 tensor engine with reverse-mode autodiff.
//!
//! Tensors live in a [`Tape`] arena and are addressed by [`TensorId`].
//! Every op appends one node, so node ids are already in topological
//! order and the backward pass is a single reverse sweep. Gradients are
//! accumulated (summed) across consumers and across repeated `backward`
//! calls; [`Tape::zero_grad`] resets them.
//!
//! Scope is deliberately narrow: 2-D matmul, elementwise arithmetic,
//! ReLU/exp/log, softmax over the last axis (masking is an additive
//! `-1e30` before the softmax, not `-inf`, so gradients stay finite),
//! reductions, differentiable gather (scatter-add backward), concat,
//! slicing, transpose/reshape, layer norm, and a fused causal prefix
//! dot product for indexer scoring. No broadcasting beyond bias rows
//! and scalar gates.
//!
//! A tape is single-threaded; independent tapes share no state and may
//! run concurrently.

mod ops;

pub use ops::causal_row_offset;

use crate::error::{Error, Result};

/// Handle to a tensor stored on a [`Tape`].
pub type TensorId = usize;

/// Additive mask value for excluded attention logits.
///
/// Large enough that `exp(MASK_VALUE - rowmax)` underflows to exactly
/// 0.0 for any realistic row maximum, small enough to stay finite.
pub const MASK_VALUE: f64 = -1e30;

/// A dense row-major f64 tensor.
#[derive(Debug, Clone)]
pub struct Tensor {
    /// Dimension sizes; product equals `data.len()`.
    pub shape: Vec<usize>,
    /// Row-major values.
    pub data: Vec<f64>,
    /// Whether gradients flow to or through this tensor.
    pub requires_grad: bool,
    /// Accumulated gradient, same length as `data`. Populated on leaves
    /// by [`Tape::backward`].
    pub grad: Option<Vec<f64>>,
}

impl Tensor {
    pub fn numel(&self) -> usize {
        self.data.len()
    }
}

/// How a node was produced; inputs are earlier node ids.
#[derive(Debug)]
pub(crate) enum Op {
    Leaf,
    Matmul { a: TensorId, b: TensorId },
    Transpose { a: TensorId },
    Reshape { a: TensorId },
    Add { a: TensorId, b: TensorId },
    AddBias { a: TensorId, bias: TensorId },
    Mul { a: TensorId, b: TensorId },
    MulGate { a: TensorId, gate: TensorId },
    Scale { a: TensorId, factor: f64 },
    Relu { a: TensorId },
    Exp { a: TensorId },
    Log { a: TensorId },
    SoftmaxLast { a: TensorId },
    SumAll { a: TensorId },
    MeanAll { a: TensorId },
    SumLast { a: TensorId },
    Gather { a: TensorId, indices: Vec<usize> },
    GatherRows { a: TensorId, rows: Vec<usize> },
    SliceRange { a: TensorId, start: usize },
    Concat { parts: Vec<TensorId> },
    LayerNorm { a: TensorId, gamma: TensorId, beta: TensorId, eps: f64 },
    CausalDot { q: TensorId, k: TensorId },
}

struct Node {
    tensor: Tensor,
    op: Op,
}

/// Arena of tensors plus the operation record needed to replay the
/// backward pass.
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

    /// Insert an input tensor.
    pub fn leaf(&mut self, data: Vec<f64>, shape: Vec<usize>, requires_grad: bool) -> Result<TensorId> {
        let numel: usize = shape.iter().product();
        if numel != data.len() || shape.is_empty() {
            return Err(Error::ShapeMismatch {
                op: "leaf",
                lhs: shape,
                rhs: vec![data.len()],
            });
        }
        Ok(self.push(Tensor { shape, data, requires_grad, grad: None }, Op::Leaf))
    }

    /// Insert a gradient-free input tensor.
    pub fn constant(&mut self, data: Vec<f64>, shape: Vec<usize>) -> Result<TensorId> {
        self.leaf(data, shape, false)
    }

    /// Insert a gradient-free scalar (shape `[1]`).
    pub fn scalar(&mut self, value: f64) -> TensorId {
        self.push(
            Tensor { shape: vec![1], data: vec![value], requires_grad: false, grad: None },
            Op::Leaf,
        )
    }

    /// Copy values into a fresh leaf that blocks gradient flow to the
    /// producers of `a`. Downstream consumers of the result still
    /// receive gradients with respect to their other inputs.
    pub fn detach(&mut self, a: TensorId) -> TensorId {
        let t = Tensor {
            shape: self.nodes[a].tensor.shape.clone(),
            data: self.nodes[a].tensor.data.clone(),
            requires_grad: false,
            grad: None,
        };
        self.push(t, Op::Leaf)
    }

    pub fn value(&self, id: TensorId) -> &[f64] {
        &self.nodes[id].tensor.data
    }

    pub fn shape(&self, id: TensorId) -> &[usize] {
        &self.nodes[id].tensor.shape
    }

    pub fn grad(&self, id: TensorId) -> Option<&[f64]> {
        self.nodes[id].tensor.grad.as_deref()
    }

    pub fn tensor(&self, id: TensorId) -> &Tensor {
        &self.nodes[id].tensor
    }

    /// Clear all accumulated gradients.
    pub fn zero_grad(&mut self) {
        for n in &mut self.nodes {
            n.tensor.grad = None;
        }
    }

    fn push(&mut self, tensor: Tensor, op: Op) -> TensorId {
        self.nodes.push(Node { tensor, op });
        self.nodes.len() - 1
    }

    pub(crate) fn push_op(&mut self, data: Vec<f64>, shape: Vec<usize>, requires_grad: bool, op: Op) -> TensorId {
        self.push(Tensor { shape, data, requires_grad, grad: None }, op)
    }

    /// Reverse-mode sweep from a scalar root.
    ///
    /// Visits nodes in strict reverse creation order (reverse topological
    /// by construction), summing each node's gradient over all consumers.
    /// On return every `requires_grad` leaf at or before `root` holds an
    /// accumulated gradient; leaves unreachable from `root` hold zeros.
    /// Repeated calls keep accumulating.
    pub fn backward(&mut self, root: TensorId) -> Result<()> {
        let root_tensor = &self.nodes[root].tensor;
        if root_tensor.numel() != 1 {
            return Err(Error::NonScalarRoot { shape: root_tensor.shape.clone() });
        }

        let mut grads: Vec<Option<Vec<f64>>> = vec![None; root + 1];
        if self.nodes[root].tensor.requires_grad {
            grads[root] = Some(vec![1.0]);
        }

        for id in (0..=root).rev() {
            let g = match grads[id].take() {
                Some(g) => g,
                None => continue,
            };
            self.propagate(id, &g, &mut grads);
            if matches!(self.nodes[id].op, Op::Leaf) {
                accumulate_into(&mut self.nodes[id].tensor.grad, &g);
            }
        }

        // Unreached grad-tracking leaves get explicit zeros.
        for id in 0..=root {
            let n = &mut self.nodes[id];
            if matches!(n.op, Op::Leaf) && n.tensor.requires_grad && n.tensor.grad.is_none() {
                n.tensor.grad = Some(vec![0.0; n.tensor.data.len()]);
            }
        }
        Ok(())
    }

    /// Route one node's output gradient to its inputs.
    fn propagate(&self, id: TensorId, g: &[f64], grads: &mut [Option<Vec<f64>>]) {
        match &self.nodes[id].op {
            Op::Leaf => {}
            &Op::Matmul { a, b } => {
                let (m, k) = dims2(self.shape(a));
                let n = self.shape(b)[1];
                if self.wants_grad(a) {
                    // dA = g @ B^T
                    let bt = transpose_raw(self.value(b), k, n);
                    let da = matmul_raw(g, &bt, m, n, k);
                    add_grad(grads, a, &da, self.numel(a));
                }
                if self.wants_grad(b) {
                    // dB = A^T @ g
                    let at = transpose_raw(self.value(a), m, k);
                    let db = matmul_raw(&at, g, k, m, n);
                    add_grad(grads, b, &db, self.numel(b));
                }
            }
            &Op::Transpose { a } => {
                if self.wants_grad(a) {
                    let (r, c) = dims2(self.shape(a));
                    // grad of output [c, r] transposed back to [r, c]
                    let da = transpose_raw(g, c, r);
                    add_grad(grads, a, &da, self.numel(a));
                }
            }
            &Op::Reshape { a } => {
                if self.wants_grad(a) {
                    add_grad(grads, a, g, self.numel(a));
                }
            }
            &Op::Add { a, b } => {
                if self.wants_grad(a) {
                    add_grad(grads, a, g, self.numel(a));
                }
                if self.wants_grad(b) {
                    add_grad(grads, b, g, self.numel(b));
                }
            }
            &Op::AddBias { a, bias } => {
                if self.wants_grad(a) {
                    add_grad(grads, a, g, self.numel(a));
                }
                if self.wants_grad(bias) {
                    let d = self.numel(bias);
                    let mut db = vec![0.0; d];
                    for (i, &gv) in g.iter().enumerate() {
                        db[i % d] += gv;
                    }
                    add_grad(grads, bias, &db, d);
                }
            }
            &Op::Mul { a, b } => {
                if self.wants_grad(a) {
                    let da: Vec<f64> = g.iter().zip(self.value(b)).map(|(&gv, &bv)| gv * bv).collect();
                    add_grad(grads, a, &da, self.numel(a));
                }
                if self.wants_grad(b) {
                    let db: Vec<f64> = g.iter().zip(self.value(a)).map(|(&gv, &av)| gv * av).collect();
                    add_grad(grads, b, &db, self.numel(b));
                }
            }
            &Op::MulGate { a, gate } => {
                let w = self.value(gate)[0];
                if self.wants_grad(a) {
                    let da: Vec<f64> = g.iter().map(|&gv| gv * w).collect();
                    add_grad(grads, a, &da, self.numel(a));
                }
                if self.wants_grad(gate) {
                    let dw: f64 = g.iter().zip(self.value(a)).map(|(&gv, &av)| gv * av).sum();
                    add_grad(grads, gate, &[dw], 1);
                }
            }
            &Op::Scale { a, factor } => {
                if self.wants_grad(a) {
                    let da: Vec<f64> = g.iter().map(|&gv| gv * factor).collect();
                    add_grad(grads, a, &da, self.numel(a));
                }
            }
            &Op::Relu { a } => {
                if self.wants_grad(a) {
                    // Subgradient 0 at exactly 0.
                    let da: Vec<f64> = g
                        .iter()
                        .zip(self.value(a))
                        .map(|(&gv, &av)| if av > 0.0 { gv } else { 0.0 })
                        .collect();
                    add_grad(grads, a, &da, self.numel(a));
                }
            }
            &Op::Exp { a } => {
                if self.wants_grad(a) {
                    let y = self.value(id);
                    let da: Vec<f64> = g.iter().zip(y).map(|(&gv, &yv)| gv * yv).collect();
                    add_grad(grads, a, &da, self.numel(a));
                }
            }
            &Op::Log { a } => {
                if self.wants_grad(a) {
                    let da: Vec<f64> = g.iter().zip(self.value(a)).map(|(&gv, &av)| gv / av).collect();
                    add_grad(grads, a, &da, self.numel(a));
                }
            }
            &Op::SoftmaxLast { a } => {
                if self.wants_grad(a) {
                    let cols = *self.shape(id).last().unwrap();
                    let y = self.value(id);
                    let mut da = vec![0.0; y.len()];
                    for r in 0..y.len() / cols {
                        let row = r * cols;
                        let dot: f64 = (0..cols).map(|c| g[row + c] * y[row + c]).sum();
                        for c in 0..cols {
                            da[row + c] = y[row + c] * (g[row + c] - dot);
                        }
                    }
                    add_grad(grads, a, &da, self.numel(a));
                }
            }
            &Op::SumAll { a } => {
                if self.wants_grad(a) {
                    let da = vec![g[0]; self.numel(a)];
                    add_grad(grads, a, &da, self.numel(a));
                }
            }
            &Op::MeanAll { a } => {
                if self.wants_grad(a) {
                    let n = self.numel(a);
                    let da = vec![g[0] / n as f64; n];
                    add_grad(grads, a, &da, n);
                }
            }
            &Op::SumLast { a } => {
                if self.wants_grad(a) {
                    let cols = *self.shape(a).last().unwrap();
                    let mut da = vec![0.0; self.numel(a)];
                    for (r, &gv) in g.iter().enumerate() {
                        for c in 0..cols {
                            da[r * cols + c] = gv;
                        }
                    }
                    add_grad(grads, a, &da, self.numel(a));
                }
            }
            Op::Gather { a, indices } => {
                let a = *a;
                if self.wants_grad(a) {
                    // Scatter-add: repeated indices accumulate.
                    let mut da = vec![0.0; self.numel(a)];
                    for (i, &src) in indices.iter().enumerate() {
                        da[src] += g[i];
                    }
                    add_grad(grads, a, &da, self.numel(a));
                }
            }
            Op::GatherRows { a, rows } => {
                let a = *a;
                if self.wants_grad(a) {
                    let cols = *self.shape(a).last().unwrap();
                    let mut da = vec![0.0; self.numel(a)];
                    for (i, &src) in rows.iter().enumerate() {
                        for c in 0..cols {
                            da[src * cols + c] += g[i * cols + c];
                        }
                    }
                    add_grad(grads, a, &da, self.numel(a));
                }
            }
            &Op::SliceRange { a, start } => {
                if self.wants_grad(a) {
                    let mut da = vec![0.0; self.numel(a)];
                    da[start..start + g.len()].copy_from_slice(g);
                    add_grad(grads, a, &da, self.numel(a));
                }
            }
            Op::Concat { parts } => {
                let mut offset = 0;
                for &p in parts.iter() {
                    let n = self.numel(p);
                    if self.wants_grad(p) {
                        add_grad(grads, p, &g[offset..offset + n], n);
                    }
                    offset += n;
                }
            }
            &Op::LayerNorm { a, gamma, beta, eps } => {
                let (rows, d) = dims2(self.shape(a));
                let x = self.value(a);
                let gam = self.value(gamma);
                let mut da = vec![0.0; x.len()];
                let mut dgamma = vec![0.0; d];
                let mut dbeta = vec![0.0; d];
                for r in 0..rows {
                    let row = &x[r * d..(r + 1) * d];
                    let gr = &g[r * d..(r + 1) * d];
                    let mean = row.iter().sum::<f64>() / d as f64;
                    let var = row.iter().map(|&v| (v - mean) * (v - mean)).sum::<f64>() / d as f64;
                    let rstd = 1.0 / (var + eps).sqrt();
                    let xhat: Vec<f64> = row.iter().map(|&v| (v - mean) * rstd).collect();
                    let dxhat: Vec<f64> = gr.iter().zip(gam).map(|(&gv, &gm)| gv * gm).collect();
                    let mean_dxhat = dxhat.iter().sum::<f64>() / d as f64;
                    let mean_dxhat_xhat =
                        dxhat.iter().zip(&xhat).map(|(&dv, &xv)| dv * xv).sum::<f64>() / d as f64;
                    for c in 0..d {
                        da[r * d + c] = rstd * (dxhat[c] - mean_dxhat - xhat[c] * mean_dxhat_xhat);
                        dgamma[c] += gr[c] * xhat[c];
                        dbeta[c] += gr[c];
                    }
                }
                if self.wants_grad(a) {
                    add_grad(grads, a, &da, self.numel(a));
                }
                if self.wants_grad(gamma) {
                    add_grad(grads, gamma, &dgamma, d);
                }
                if self.wants_grad(beta) {
                    add_grad(grads, beta, &dbeta, d);
                }
            }
            &Op::CausalDot { q, k } => {
                let (l, d) = dims2(self.shape(q));
                let qv = self.value(q);
                let kv = self.value(k);
                let mut dq = vec![0.0; qv.len()];
                let mut dk = vec![0.0; kv.len()];
                let mut off = 0;
                for t in 0..l {
                    for s in 0..=t {
                        let gv = g[off + s];
                        if gv != 0.0 {
                            for c in 0..d {
                                dq[t * d + c] += gv * kv[s * d + c];
                                dk[s * d + c] += gv * qv[t * d + c];
                            }
                        }
                    }
                    off += t + 1;
                }
                if self.wants_grad(q) {
                    add_grad(grads, q, &dq, qv.len());
                }
                if self.wants_grad(k) {
                    add_grad(grads, k, &dk, kv.len());
                }
            }
        }
    }

    fn wants_grad(&self, id: TensorId) -> bool {
        self.nodes[id].tensor.requires_grad
    }

    fn numel(&self, id: TensorId) -> usize {
        self.nodes[id].tensor.data.len()
    }

    pub(crate) fn any_grad(&self, ids: &[TensorId]) -> bool {
        ids.iter().any(|&i| self.nodes[i].tensor.requires_grad)
    }
}

fn dims2(shape: &[usize]) -> (usize, usize) {
    (shape[0], shape[1])
}

fn add_grad(grads: &mut [Option<Vec<f64>>], id: TensorId, delta: &[f64], numel: usize) {
    let slot = grads[id].get_or_insert_with(|| vec![0.0; numel]);
    for (s, &d) in slot.iter_mut().zip(delta) {
        *s += d;
    }
}

fn accumulate_into(grad: &mut Option<Vec<f64>>, delta: &[f64]) {
    match grad {
        Some(existing) => {
            for (e, &d) in existing.iter_mut().zip(delta) {
                *e += d;
            }
        }
        None => *grad = Some(delta.to_vec()),
    }
}

pub(crate) fn matmul_raw(a: &[f64], b: &[f64], m: usize, k: usize, n: usize) -> Vec<f64> {
    let mut out = vec![0.0; m * n];
    for i in 0..m {
        for p in 0..k {
            let av = a[i * k + p];
            if av == 0.0 {
                continue;
            }
            let brow = &b[p * n..(p + 1) * n];
            let orow = &mut out[i * n..(i + 1) * n];
            for (o, &bv) in orow.iter_mut().zip(brow) {
                *o += av * bv;
            }
        }
    }
    out
}

pub(crate) fn transpose_raw(a: &[f64], rows: usize, cols: usize) -> Vec<f64> {
    let mut out = vec![0.0; a.len()];
    for r in 0..rows {
        for c in 0..cols {
            out[c * rows + r] = a[r * cols + c];
        }
    }
    out
}

#[cfg(test)]
mod tests {
    use super::*;

    fn close(a: f64, b: f64, tol: f64) -> bool {
        (a - b).abs() <= tol
    }

    #[test]
    fn relu_clamps_negatives() {
        let mut t = Tape::new();
        let x = t.leaf(vec![-1.0, 0.0, 2.0], vec![3], false).unwrap();
        let y = t.relu(x);
        assert_eq!(t.value(y), &[0.0, 0.0, 2.0]);
    }

    #[test]
    fn softmax_of_equal_logits_is_uniform() {
        let mut t = Tape::new();
        let x = t.leaf(vec![1.3; 4], vec![4], false).unwrap();
        let y = t.softmax_last(x);
        for &v in t.value(y) {
            assert!(close(v, 0.25, 1e-15));
        }
    }

    #[test]
    fn matmul_matches_triple_loop() {
        let a = vec![1.0, -2.0, 3.0, 0.5, 4.0, -1.0]; // 2x3
        let b = vec![2.0, 1.0, 0.0, -3.0, 1.5, 2.5]; // 3x2
        let mut expected = vec![0.0; 4];
        for i in 0..2 {
            for j in 0..2 {
                for p in 0..3 {
                    expected[i * 2 + j] += a[i * 3 + p] * b[p * 2 + j];
                }
            }
        }
        let mut t = Tape::new();
        let ta = t.leaf(a, vec![2, 3], false).unwrap();
        let tb = t.leaf(b, vec![3, 2], false).unwrap();
        let c = t.matmul(ta, tb).unwrap();
        assert_eq!(t.value(c), expected.as_slice());
    }

    #[test]
    fn square_gradient_at_three() {
        let mut t = Tape::new();
        let x = t.leaf(vec![3.0], vec![1], true).unwrap();
        let y = t.mul(x, x).unwrap();
        t.backward(y).unwrap();
        assert_eq!(t.grad(x).unwrap(), &[6.0]);
    }

    #[test]
    fn detach_blocks_gradient_and_preserves_values() {
        let mut t = Tape::new();
        let x = t.leaf(vec![2.0, -1.5], vec![2], true).unwrap();
        let y = t.leaf(vec![4.0, 3.0], vec![2], true).unwrap();
        let xd = t.detach(x);
        assert_eq!(t.value(xd), t.value(x));
        let prod = t.mul(xd, y).unwrap();
        let loss = t.sum_all(prod);
        t.backward(loss).unwrap();
        assert_eq!(t.grad(x).unwrap(), &[0.0, 0.0]);
        assert_eq!(t.grad(y).unwrap(), &[2.0, -1.5]);
    }

    #[test]
    fn gradient_sums_over_consumers() {
        // f(x) = sum(x*a) + sum(x*b) => df/dx = a + b exactly
        let mut t = Tape::new();
        let x = t.leaf(vec![1.0, 2.0], vec![2], true).unwrap();
        let a = t.constant(vec![3.0, 5.0], vec![2]).unwrap();
        let b = t.constant(vec![-1.0, 0.25], vec![2]).unwrap();
        let xa = t.mul(x, a).unwrap();
        let xb = t.mul(x, b).unwrap();
        let s = t.add(xa, xb).unwrap();
        let loss = t.sum_all(s);
        t.backward(loss).unwrap();
        assert_eq!(t.grad(x).unwrap(), &[3.0 + -1.0, 5.0 + 0.25]);
    }

    #[test]
    fn unreachable_leaf_gets_zero_grad() {
        let mut t = Tape::new();
        let x = t.leaf(vec![1.0], vec![1], true).unwrap();
        let orphan = t.leaf(vec![9.0, 9.0], vec![2], true).unwrap();
        let y = t.mul(x, x).unwrap();
        t.backward(y).unwrap();
        assert_eq!(t.grad(orphan).unwrap(), &[0.0, 0.0]);
    }

    #[test]
    fn backward_rejects_non_scalar_root() {
        let mut t = Tape::new();
        let x = t.leaf(vec![1.0, 2.0], vec![2], true).unwrap();
        let err = t.backward(x).unwrap_err();
        assert!(matches!(err, Error::NonScalarRoot { .. }));
    }

    #[test]
    fn shape_mismatch_names_the_op() {
        let mut t = Tape::new();
        let a = t.leaf(vec![1.0, 2.0], vec![2, 1], false).unwrap();
        let b = t.leaf(vec![1.0, 2.0], vec![2, 1], false).unwrap();
        let err = t.matmul(a, b).unwrap_err();
        let msg = err.to_string();
        assert!(msg.contains("matmul"), "{msg}");
        assert!(msg.contains("[2, 1]"), "{msg}");
    }

    #[test]
    fn masked_softmax_zeroes_masked_entries() {
        let mut t = Tape::new();
        let x = t.leaf(vec![1.0, 2.0, MASK_VALUE, MASK_VALUE], vec![4], true).unwrap();
        let y = t.softmax_last(x);
        let v = t.value(y);
        assert_eq!(v[2], 0.0);
        assert_eq!(v[3], 0.0);
        assert!(close(v[0] + v[1], 1.0, 1e-15));
        // Gradient through the masked softmax stays finite.
        let s = t.sum_all(y);
        t.backward(s).unwrap();
        assert!(t.grad(x).unwrap().iter().all(|g| g.is_finite()));
    }

    #[test]
    fn causal_dot_packs_prefix_rows() {
        let mut t = Tape::new();
        let q = t.leaf(vec![1.0, 0.0, 0.0, 1.0, 1.0, 1.0], vec![3, 2], false).unwrap();
        let k = t.leaf(vec![2.0, 3.0, 4.0, 5.0, 6.0, 7.0], vec![3, 2], false).unwrap();
        let packed = t.causal_dot(q, k).unwrap();
        // row 0: q0.k0 = 2; row 1: q1.k0 = 3, q1.k1 = 5; row 2: 5, 9, 13
        assert_eq!(t.value(packed), &[2.0, 3.0, 5.0, 5.0, 9.0, 13.0]);
        assert_eq!(causal_row_offset(2), 3);
    }

    #[test]
    fn gather_backward_scatter_adds_repeats() {
        let mut t = Tape::new();
        let x = t.leaf(vec![1.0, 2.0, 3.0], vec![3], true).unwrap();
        let g = t.gather(x, vec![0, 0, 2], vec![3]).unwrap();
        let s = t.sum_all(g);
        t.backward(s).unwrap();
        assert_eq!(t.grad(x).unwrap(), &[2.0, 0.0, 1.0]);
    }

    #[test]
    fn repeated_backward_accumulates() {
        let mut t = Tape::new();
        let x = t.leaf(vec![2.0], vec![1], true).unwrap();
        let y = t.mul(x, x).unwrap();
        t.backward(y).unwrap();
        t.backward(y).unwrap();
        assert_eq!(t.grad(x).unwrap(), &[8.0]);
        t.zero_grad();
        assert!(t.grad(x).is_none());
    }

    #[test]
    fn forward_is_deterministic() {
        let run = || {
            let mut t = Tape::new();
            let x = t.leaf(vec![0.3, -1.2, 0.7, 2.2], vec![2, 2], false).unwrap();
            let y = t.softmax_last(x);
            let z = t.exp(y);
            t.value(z).to_vec()
        };
        let a = run();
        let b = run();
        assert!(a.iter().zip(&b).all(|(x, y)| x.to_bits() == y.to_bits()));
    }
}
