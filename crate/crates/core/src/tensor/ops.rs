//! Forward implementations of the tape primitives.
//!
//! Each builder validates shapes, computes the forward value, and
//! appends one node. The output tracks gradients iff any input does.

use super::{matmul_raw, transpose_raw, Op, Tape, TensorId};
use crate::error::{Error, Result};

impl Tape {
    /// `[m, k] @ [k, n] -> [m, n]`, strictly 2-D.
    pub fn matmul(&mut self, a: TensorId, b: TensorId) -> Result<TensorId> {
        let (sa, sb) = (self.shape(a).to_vec(), self.shape(b).to_vec());
        if sa.len() != 2 || sb.len() != 2 || sa[1] != sb[0] {
            return Err(Error::ShapeMismatch { op: "matmul", lhs: sa, rhs: sb });
        }
        let (m, k, n) = (sa[0], sa[1], sb[1]);
        let data = matmul_raw(self.value(a), self.value(b), m, k, n);
        let rg = self.any_grad(&[a, b]);
        Ok(self.push_op(data, vec![m, n], rg, Op::Matmul { a, b }))
    }

    /// 2-D transpose.
    pub fn transpose(&mut self, a: TensorId) -> Result<TensorId> {
        let s = self.shape(a).to_vec();
        if s.len() != 2 {
            return Err(Error::ShapeMismatch { op: "transpose", lhs: s, rhs: vec![] });
        }
        let data = transpose_raw(self.value(a), s[0], s[1]);
        let rg = self.any_grad(&[a]);
        Ok(self.push_op(data, vec![s[1], s[0]], rg, Op::Transpose { a }))
    }

    /// Reinterpret the data with a new shape of equal element count.
    pub fn reshape(&mut self, a: TensorId, shape: Vec<usize>) -> Result<TensorId> {
        let numel: usize = shape.iter().product();
        if numel != self.value(a).len() || shape.is_empty() {
            return Err(Error::ShapeMismatch { op: "reshape", lhs: self.shape(a).to_vec(), rhs: shape });
        }
        let data = self.value(a).to_vec();
        let rg = self.any_grad(&[a]);
        Ok(self.push_op(data, shape, rg, Op::Reshape { a }))
    }

    /// Elementwise sum of two same-shape tensors.
    pub fn add(&mut self, a: TensorId, b: TensorId) -> Result<TensorId> {
        if self.shape(a) != self.shape(b) {
            return Err(Error::ShapeMismatch {
                op: "add",
                lhs: self.shape(a).to_vec(),
                rhs: self.shape(b).to_vec(),
            });
        }
        let data: Vec<f64> = self.value(a).iter().zip(self.value(b)).map(|(&x, &y)| x + y).collect();
        let shape = self.shape(a).to_vec();
        let rg = self.any_grad(&[a, b]);
        Ok(self.push_op(data, shape, rg, Op::Add { a, b }))
    }

    /// `[.., d] + [d]`: adds a row vector to every row.
    pub fn add_bias(&mut self, a: TensorId, bias: TensorId) -> Result<TensorId> {
        let d = *self.shape(a).last().unwrap();
        if self.shape(bias) != [d] {
            return Err(Error::ShapeMismatch {
                op: "add_bias",
                lhs: self.shape(a).to_vec(),
                rhs: self.shape(bias).to_vec(),
            });
        }
        let bv = self.value(bias).to_vec();
        let data: Vec<f64> = self
            .value(a)
            .iter()
            .enumerate()
            .map(|(i, &x)| x + bv[i % d])
            .collect();
        let shape = self.shape(a).to_vec();
        let rg = self.any_grad(&[a, bias]);
        Ok(self.push_op(data, shape, rg, Op::AddBias { a, bias }))
    }

    /// Elementwise product of two same-shape tensors.
    pub fn mul(&mut self, a: TensorId, b: TensorId) -> Result<TensorId> {
        if self.shape(a) != self.shape(b) {
            return Err(Error::ShapeMismatch {
                op: "mul",
                lhs: self.shape(a).to_vec(),
                rhs: self.shape(b).to_vec(),
            });
        }
        let data: Vec<f64> = self.value(a).iter().zip(self.value(b)).map(|(&x, &y)| x * y).collect();
        let shape = self.shape(a).to_vec();
        let rg = self.any_grad(&[a, b]);
        Ok(self.push_op(data, shape, rg, Op::Mul { a, b }))
    }

    /// Multiply by a learned scalar gate (shape `[1]`).
    pub fn mul_gate(&mut self, a: TensorId, gate: TensorId) -> Result<TensorId> {
        if self.value(gate).len() != 1 {
            return Err(Error::ShapeMismatch {
                op: "mul_gate",
                lhs: self.shape(a).to_vec(),
                rhs: self.shape(gate).to_vec(),
            });
        }
        let w = self.value(gate)[0];
        let data: Vec<f64> = self.value(a).iter().map(|&x| x * w).collect();
        let shape = self.shape(a).to_vec();
        let rg = self.any_grad(&[a, gate]);
        Ok(self.push_op(data, shape, rg, Op::MulGate { a, gate }))
    }

    /// Multiply by a compile-time constant factor.
    pub fn scale(&mut self, a: TensorId, factor: f64) -> TensorId {
        let data: Vec<f64> = self.value(a).iter().map(|&x| x * factor).collect();
        let shape = self.shape(a).to_vec();
        let rg = self.any_grad(&[a]);
        self.push_op(data, shape, rg, Op::Scale { a, factor })
    }

    pub fn relu(&mut self, a: TensorId) -> TensorId {
        let data: Vec<f64> = self.value(a).iter().map(|&x| x.max(0.0)).collect();
        let shape = self.shape(a).to_vec();
        let rg = self.any_grad(&[a]);
        self.push_op(data, shape, rg, Op::Relu { a })
    }

    pub fn exp(&mut self, a: TensorId) -> TensorId {
        let data: Vec<f64> = self.value(a).iter().map(|&x| x.exp()).collect();
        let shape = self.shape(a).to_vec();
        let rg = self.any_grad(&[a]);
        self.push_op(data, shape, rg, Op::Exp { a })
    }

    pub fn log(&mut self, a: TensorId) -> TensorId {
        let data: Vec<f64> = self.value(a).iter().map(|&x| x.ln()).collect();
        let shape = self.shape(a).to_vec();
        let rg = self.any_grad(&[a]);
        self.push_op(data, shape, rg, Op::Log { a })
    }

    /// Row-wise softmax over the last axis, with max subtraction.
    ///
    /// Entries already pushed to [`super::MASK_VALUE`] by an additive
    /// mask come out as exactly 0.
    pub fn softmax_last(&mut self, a: TensorId) -> TensorId {
        let cols = *self.shape(a).last().unwrap();
        let x = self.value(a);
        let mut data = vec![0.0; x.len()];
        for r in 0..x.len() / cols {
            let row = &x[r * cols..(r + 1) * cols];
            let max = row.iter().cloned().fold(f64::NEG_INFINITY, f64::max);
            let mut sum = 0.0;
            for (c, &v) in row.iter().enumerate() {
                let e = (v - max).exp();
                data[r * cols + c] = e;
                sum += e;
            }
            for c in 0..cols {
                data[r * cols + c] /= sum;
            }
        }
        let shape = self.shape(a).to_vec();
        let rg = self.any_grad(&[a]);
        self.push_op(data, shape, rg, Op::SoftmaxLast { a })
    }

    /// Sum of all elements, shape `[1]`.
    pub fn sum_all(&mut self, a: TensorId) -> TensorId {
        let s: f64 = self.value(a).iter().sum();
        let rg = self.any_grad(&[a]);
        self.push_op(vec![s], vec![1], rg, Op::SumAll { a })
    }

    /// Mean of all elements, shape `[1]`.
    pub fn mean_all(&mut self, a: TensorId) -> TensorId {
        let n = self.value(a).len();
        let s: f64 = self.value(a).iter().sum();
        let rg = self.any_grad(&[a]);
        self.push_op(vec![s / n as f64], vec![1], rg, Op::MeanAll { a })
    }

    /// Sum over the last axis: `[.., n] -> [..]` (a 1-D input becomes `[1]`).
    pub fn sum_last(&mut self, a: TensorId) -> TensorId {
        let shape = self.shape(a).to_vec();
        let cols = *shape.last().unwrap();
        let x = self.value(a);
        let rows = x.len() / cols;
        let mut data = vec![0.0; rows];
        for r in 0..rows {
            data[r] = x[r * cols..(r + 1) * cols].iter().sum();
        }
        let out_shape = if shape.len() == 1 { vec![1] } else { shape[..shape.len() - 1].to_vec() };
        let rg = self.any_grad(&[a]);
        self.push_op(data, out_shape, rg, Op::SumLast { a })
    }

    /// Select elements by flat index; repeated indices are allowed.
    /// Backward is scatter-add into the source.
    pub fn gather(&mut self, a: TensorId, indices: Vec<usize>, shape: Vec<usize>) -> Result<TensorId> {
        let numel: usize = shape.iter().product();
        if numel != indices.len() || shape.is_empty() {
            return Err(Error::ShapeMismatch { op: "gather", lhs: shape, rhs: vec![indices.len()] });
        }
        let src = self.value(a);
        let mut data = Vec::with_capacity(indices.len());
        for &i in &indices {
            if i >= src.len() {
                return Err(Error::IndexOutOfRange { op: "gather", index: i, len: src.len() });
            }
            data.push(src[i]);
        }
        let rg = self.any_grad(&[a]);
        Ok(self.push_op(data, shape, rg, Op::Gather { a, indices }))
    }

    /// Select whole rows of a 2-D tensor; repeated rows are allowed.
    pub fn gather_rows(&mut self, a: TensorId, rows: Vec<usize>) -> Result<TensorId> {
        let s = self.shape(a).to_vec();
        if s.len() != 2 {
            return Err(Error::ShapeMismatch { op: "gather_rows", lhs: s, rhs: vec![] });
        }
        let (r, c) = (s[0], s[1]);
        let src = self.value(a);
        let mut data = Vec::with_capacity(rows.len() * c);
        for &row in &rows {
            if row >= r {
                return Err(Error::IndexOutOfRange { op: "gather_rows", index: row, len: r });
            }
            data.extend_from_slice(&src[row * c..(row + 1) * c]);
        }
        let n = rows.len();
        let rg = self.any_grad(&[a]);
        Ok(self.push_op(data, vec![n, c], rg, Op::GatherRows { a, rows }))
    }

    /// Contiguous flat slice `[start, start+len)` viewed with `shape`.
    pub fn slice_range(&mut self, a: TensorId, start: usize, shape: Vec<usize>) -> Result<TensorId> {
        let len: usize = shape.iter().product();
        let src = self.value(a);
        if start + len > src.len() || shape.is_empty() {
            return Err(Error::IndexOutOfRange {
                op: "slice_range",
                index: start + len,
                len: src.len(),
            });
        }
        let data = src[start..start + len].to_vec();
        let rg = self.any_grad(&[a]);
        Ok(self.push_op(data, shape, rg, Op::SliceRange { a, start }))
    }

    /// Concatenate the flattened parts in order, viewed with `shape`.
    pub fn concat(&mut self, parts: &[TensorId], shape: Vec<usize>) -> Result<TensorId> {
        if parts.is_empty() {
            return Err(Error::EmptyInput { what: "concat parts" });
        }
        let total: usize = parts.iter().map(|&p| self.value(p).len()).sum();
        let numel: usize = shape.iter().product();
        if total != numel || shape.is_empty() {
            return Err(Error::ShapeMismatch { op: "concat", lhs: shape, rhs: vec![total] });
        }
        let mut data = Vec::with_capacity(total);
        for &p in parts {
            data.extend_from_slice(self.value(p));
        }
        let rg = self.any_grad(parts);
        Ok(self.push_op(data, shape, rg, Op::Concat { parts: parts.to_vec() }))
    }

    /// Layer normalization over the last axis of a 2-D tensor with
    /// learned gain and bias.
    pub fn layer_norm(&mut self, a: TensorId, gamma: TensorId, beta: TensorId, eps: f64) -> Result<TensorId> {
        let s = self.shape(a).to_vec();
        if s.len() != 2 || self.shape(gamma) != [s[1]] || self.shape(beta) != [s[1]] {
            return Err(Error::ShapeMismatch {
                op: "layer_norm",
                lhs: s,
                rhs: self.shape(gamma).to_vec(),
            });
        }
        let (rows, d) = (s[0], s[1]);
        let x = self.value(a);
        let gam = self.value(gamma).to_vec();
        let bet = self.value(beta).to_vec();
        let mut data = vec![0.0; x.len()];
        for r in 0..rows {
            let row = &x[r * d..(r + 1) * d];
            let mean = row.iter().sum::<f64>() / d as f64;
            let var = row.iter().map(|&v| (v - mean) * (v - mean)).sum::<f64>() / d as f64;
            let rstd = 1.0 / (var + eps).sqrt();
            for c in 0..d {
                data[r * d + c] = (row[c] - mean) * rstd * gam[c] + bet[c];
            }
        }
        let rg = self.any_grad(&[a, gamma, beta]);
        Ok(self.push_op(data, vec![rows, d], rg, Op::LayerNorm { a, gamma, beta, eps }))
    }

    /// Causal prefix dot products: for `q, k` of shape `[L, d]`, emits the
    /// packed lower triangle `out[t][s] = q_t . k_s` for `s <= t`, flattened
    /// row by row into shape `[L(L+1)/2]`. Row `t` starts at offset
    /// `t(t+1)/2` and has `t+1` entries.
    ///
    /// Does exactly `L(L+1)/2 * d` multiply-accumulates; the quadratic
    /// indexer cost model counts these.
    pub fn causal_dot(&mut self, q: TensorId, k: TensorId) -> Result<TensorId> {
        let (sq, sk) = (self.shape(q).to_vec(), self.shape(k).to_vec());
        if sq.len() != 2 || sq != sk {
            return Err(Error::ShapeMismatch { op: "causal_dot", lhs: sq, rhs: sk });
        }
        let (l, d) = (sq[0], sq[1]);
        let qv = self.value(q);
        let kv = self.value(k);
        let mut data = Vec::with_capacity(l * (l + 1) / 2);
        for t in 0..l {
            let qrow = &qv[t * d..(t + 1) * d];
            for s in 0..=t {
                let krow = &kv[s * d..(s + 1) * d];
                let mut acc = 0.0;
                for c in 0..d {
                    acc += qrow[c] * krow[c];
                }
                data.push(acc);
            }
        }
        let n = data.len();
        let rg = self.any_grad(&[q, k]);
        Ok(self.push_op(data, vec![n], rg, Op::CausalDot { q, k }))
    }
}

/// Offset of query position `t`'s row in a packed causal triangle.
pub fn causal_row_offset(t: usize) -> usize {
    t * (t + 1) / 2
}
