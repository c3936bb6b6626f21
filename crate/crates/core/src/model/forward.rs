//! Tape-level forward passes for the toy model.
//!
//! The standard inference loop runs, per layer: indexer -> top-k ->
//! sparse core attention -> FFN (dense mode replaces the middle two
//! steps with full causal attention). The per-layer building blocks are
//! shared with the index-reuse engine, which supplies its own loop.
//!
//! Sparse attention is computed per query position over exactly the
//! selected rows, so the instrumented MAC counters reflect the real
//! work: `sum_t min(k, t+1)` scored positions per head, twice (QK and
//! AV).

use super::{
    is_indexer_param, Distribution, ForwardStats, IndexerScores, Model, ModelConfig, TopKIndexSet,
};
use crate::error::{Error, Result};
use crate::tensor::{causal_row_offset, Tape, TensorId, MASK_VALUE};
use std::collections::BTreeMap;

/// Attention mode of the standard forward pass.
#[derive(Debug, Clone, Copy, PartialEq, Eq)]
pub enum AttnMode {
    /// Full causal attention; indexer runs only for analysis capture.
    Dense,
    /// Indexer -> top-k -> sparse core attention at every layer.
    Sparse,
}

/// Which forward-pass artifacts to retain as value copies.
///
/// Tape ids are always recorded; value copies cost O(N * L * k) or
/// O(N * L^2) memory and are opt-in.
#[derive(Debug, Clone, Copy, Default)]
pub struct Capture {
    /// Per-layer indexer score rows.
    pub indexer_scores: bool,
    /// Per-layer selected index sets.
    pub indices: bool,
    /// Per-layer head-averaged attention distributions (dense: over the
    /// causal prefix; sparse: over the selected positions).
    pub attn_dist: bool,
    /// Per-layer normalized attention inputs and attention outputs.
    pub layer_io: bool,
}

impl Capture {
    pub fn none() -> Self {
        Capture::default()
    }

    pub fn all() -> Self {
        Capture { indexer_scores: true, indices: true, attn_dist: true, layer_io: true }
    }
}

/// Which parameters are bound with gradient tracking.
#[derive(Debug, Clone, Copy, PartialEq, Eq)]
pub enum Trainable {
    None,
    All,
    IndexerOnly,
    AllExceptIndexer,
}

impl Trainable {
    pub fn wants(&self, name: &str) -> bool {
        match self {
            Trainable::None => false,
            Trainable::All => true,
            Trainable::IndexerOnly => is_indexer_param(name),
            Trainable::AllExceptIndexer => !is_indexer_param(name),
        }
    }
}

/// Parameter name -> tape leaf id for one forward invocation.
#[derive(Debug, Clone)]
pub struct BoundParams {
    ids: BTreeMap<String, TensorId>,
}

impl BoundParams {
    pub fn id(&self, name: &str) -> TensorId {
        *self
            .ids
            .get(name)
            .unwrap_or_else(|| panic!("parameter {name} not bound"))
    }

    pub fn layer(&self, layer: usize, suffix: &str) -> TensorId {
        self.id(&format!("layers.{layer}.{suffix}"))
    }

    /// Gradient of a parameter after `backward`, if tracked and reached.
    pub fn grad_of<'t>(&self, tape: &'t Tape, name: &str) -> Option<&'t [f64]> {
        tape.grad(self.id(name))
    }

    pub fn iter(&self) -> impl Iterator<Item = (&String, &TensorId)> {
        self.ids.iter()
    }
}

/// Bind every model parameter onto the tape as a leaf.
pub(crate) fn bind_params(model: &Model, tape: &mut Tape, trainable: Trainable) -> Result<BoundParams> {
    let mut ids = BTreeMap::new();
    for (name, p) in model.params.iter() {
        let id = tape.leaf(p.data.clone(), p.shape.clone(), trainable.wants(name))?;
        ids.insert(name.clone(), id);
    }
    Ok(BoundParams { ids })
}

/// Per-layer artifacts of one forward pass.
#[derive(Debug, Clone, Default)]
pub struct LayerRecord {
    /// Tape id of the packed causal indexer scores, when the indexer ran.
    pub packed_scores: Option<TensorId>,
    /// Value copy of the indexer score rows.
    pub scores: Option<IndexerScores>,
    /// Selected (or inherited) top-k positions used by this layer.
    pub indices: Option<TopKIndexSet>,
    /// Head-averaged attention weights.
    pub attn_dist: Option<Distribution>,
    /// Normalized attention input values, length L * d_model.
    pub attn_input_norm: Option<Vec<f64>>,
    /// Attention block output values (after the output projection,
    /// before the residual add), length L * d_model.
    pub attn_output: Option<Vec<f64>>,
}

/// Result of a standard forward pass.
pub struct ForwardOutput {
    pub logits: TensorId,
    pub stats: ForwardStats,
    pub layers: Vec<LayerRecord>,
    pub bound: BoundParams,
}

impl Model {
    /// Standard inference loop (no cross-layer reuse).
    ///
    /// Dense mode runs full causal attention and can record the
    /// head-averaged distributions; sparse mode runs the indexer,
    /// top-k selection, and sparse core attention at every layer.
    pub fn forward(
        &self,
        tape: &mut Tape,
        tokens: &[usize],
        mode: AttnMode,
        capture: Capture,
        trainable: Trainable,
    ) -> Result<ForwardOutput> {
        validate_tokens(&self.config, tokens)?;
        let bound = bind_params(self, tape, trainable)?;
        let mut stats = ForwardStats::default();
        let mut layers = Vec::with_capacity(self.config.n_layers);

        let mut x = embed(tape, &bound, &self.config, tokens)?;
        for layer in 1..=self.config.n_layers {
            let xn = attn_norm(tape, &bound, layer, x)?;
            let mut rec = LayerRecord::default();

            let attn = match mode {
                AttnMode::Dense => {
                    if capture.indexer_scores || capture.indices {
                        let packed = indexer_scores_tape(tape, &bound, &self.config, layer, xn, &mut stats)?;
                        let scores = packed_score_rows(tape.value(packed), tokens.len());
                        if capture.indices {
                            rec.indices = Some(super::topk_select(&scores, self.config.top_k));
                        }
                        rec.packed_scores = Some(packed);
                        if capture.indexer_scores {
                            rec.scores = Some(scores);
                        }
                    }
                    let (attn, dist) =
                        dense_attention_block(tape, &bound, &self.config, layer, xn, capture.attn_dist)?;
                    rec.attn_dist = dist;
                    attn
                }
                AttnMode::Sparse => {
                    let packed = indexer_scores_tape(tape, &bound, &self.config, layer, xn, &mut stats)?;
                    let scores = packed_score_rows(tape.value(packed), tokens.len());
                    let selected = super::topk_select(&scores, self.config.top_k);
                    let (attn, dist) = sparse_attention_block(
                        tape,
                        &bound,
                        &self.config,
                        layer,
                        xn,
                        &selected,
                        capture.attn_dist,
                        &mut stats,
                    )?;
                    rec.packed_scores = Some(packed);
                    if capture.indexer_scores {
                        rec.scores = Some(scores);
                    }
                    if capture.indices {
                        rec.indices = Some(selected);
                    }
                    rec.attn_dist = dist;
                    attn
                }
            };

            if capture.layer_io {
                rec.attn_input_norm = Some(tape.value(xn).to_vec());
                rec.attn_output = Some(tape.value(attn).to_vec());
            }
            x = tape.add(x, attn)?;
            x = ffn_block(tape, &bound, &self.config, layer, x)?;
            layers.push(rec);
        }

        let logits = lm_head(tape, &bound, &self.config, x)?;
        Ok(ForwardOutput { logits, stats, layers, bound })
    }

    /// Indexer scores for one layer on given normalized hidden values
    /// (value-level convenience over the tape implementation).
    pub fn indexer_scores(&self, layer: usize, hidden: &[f64]) -> Result<IndexerScores> {
        let l = hidden.len() / self.config.d_model;
        let mut tape = Tape::new();
        let bound = bind_params(self, &mut tape, Trainable::None)?;
        let xn = tape.constant(hidden.to_vec(), vec![l, self.config.d_model])?;
        let mut stats = ForwardStats::default();
        let packed = indexer_scores_tape(&mut tape, &bound, &self.config, layer, xn, &mut stats)?;
        Ok(packed_score_rows(tape.value(packed), l))
    }

    /// Head-averaged full-attention distribution for one layer on given
    /// normalized hidden values.
    pub fn attention_distribution(&self, layer: usize, hidden: &[f64]) -> Result<Distribution> {
        let l = hidden.len() / self.config.d_model;
        let mut tape = Tape::new();
        let bound = bind_params(self, &mut tape, Trainable::None)?;
        let xn = tape.constant(hidden.to_vec(), vec![l, self.config.d_model])?;
        let (_, dist) = dense_attention_block(&mut tape, &bound, &self.config, layer, xn, true)?;
        Ok(dist.expect("distribution requested"))
    }
}

/// Sparse attention output values for one layer on given normalized
/// hidden values and a fixed index set. Used by the reuse-similarity
/// analysis to recompute a layer's attention under substituted indices.
pub fn sparse_attention_values(
    model: &Model,
    layer: usize,
    hidden: &[f64],
    indices: &TopKIndexSet,
) -> Result<Vec<f64>> {
    let l = hidden.len() / model.config.d_model;
    let mut tape = Tape::new();
    let bound = bind_params(model, &mut tape, Trainable::None)?;
    let xn = tape.constant(hidden.to_vec(), vec![l, model.config.d_model])?;
    let mut stats = ForwardStats::default();
    let (out, _) =
        sparse_attention_block(&mut tape, &bound, &model.config, layer, xn, indices, false, &mut stats)?;
    Ok(tape.value(out).to_vec())
}

pub(crate) fn validate_tokens(config: &ModelConfig, tokens: &[usize]) -> Result<()> {
    if tokens.is_empty() {
        return Err(Error::EmptyInput { what: "token sequence" });
    }
    if tokens.len() > config.l_max {
        return Err(Error::InvalidConfig {
            reason: format!("sequence length {} exceeds l_max {}", tokens.len(), config.l_max),
        });
    }
    for &t in tokens {
        if t >= config.vocab_size {
            return Err(Error::IndexOutOfRange { op: "embed", index: t, len: config.vocab_size });
        }
    }
    Ok(())
}

/// Token + position embeddings: `[L, d]`.
pub(crate) fn embed(tape: &mut Tape, bound: &BoundParams, config: &ModelConfig, tokens: &[usize]) -> Result<TensorId> {
    let tok = tape.gather_rows(bound.id("tok_emb"), tokens.to_vec())?;
    let pos = tape.slice_range(bound.id("pos_emb"), 0, vec![tokens.len(), config.d_model])?;
    tape.add(tok, pos)
}

pub(crate) fn attn_norm(tape: &mut Tape, bound: &BoundParams, layer: usize, x: TensorId) -> Result<TensorId> {
    tape.layer_norm(x, bound.layer(layer, "attn.ln_g"), bound.layer(layer, "attn.ln_b"), 1e-5)
}

/// Multi-head ReLU-gated dot-product indexer.
///
/// Emits the packed causal triangle of `I[t][s] = sum_h w_h *
/// relu(q_idx[t,h] . k_idx[s,h])` for `s <= t`. Counts `d_idx` MACs per
/// scored (t, s) pair per head; the O(L) projections and the gate
/// multiply are excluded from the quadratic-cost counter.
pub(crate) fn indexer_scores_tape(
    tape: &mut Tape,
    bound: &BoundParams,
    config: &ModelConfig,
    layer: usize,
    xn: TensorId,
    stats: &mut ForwardStats,
) -> Result<TensorId> {
    let l = tape.shape(xn)[0];
    let pairs = (l * (l + 1) / 2) as u64;
    let mut total: Option<TensorId> = None;
    for h in 0..config.n_idx_heads {
        let qi = tape.matmul(xn, bound.layer(layer, &format!("idx.{h}.wq")))?;
        let ki = tape.matmul(xn, bound.layer(layer, &format!("idx.{h}.wk")))?;
        let packed = tape.causal_dot(qi, ki)?;
        stats.indexer_macs += pairs * config.d_idx as u64;
        let gated = tape.relu(packed);
        let gated = tape.mul_gate(gated, bound.layer(layer, &format!("idx.{h}.gate")))?;
        total = Some(match total {
            Some(acc) => tape.add(acc, gated)?,
            None => gated,
        });
    }
    stats.indexer_calls += 1;
    Ok(total.expect("n_idx_heads >= 1"))
}

/// Unpack a causal triangle into per-query score rows.
pub(crate) fn packed_score_rows(packed: &[f64], l: usize) -> IndexerScores {
    let rows = (0..l)
        .map(|t| {
            let off = causal_row_offset(t);
            packed[off..off + t + 1].to_vec()
        })
        .collect();
    IndexerScores { rows }
}

/// Flat index lists selecting one head's columns from `[L, d_model]`.
fn head_columns(l: usize, d_model: usize, head: usize, dh: usize) -> Vec<usize> {
    let mut idx = Vec::with_capacity(l * dh);
    for r in 0..l {
        let base = r * d_model + head * dh;
        idx.extend(base..base + dh);
    }
    idx
}

/// Full causal multi-head attention; optionally returns the
/// head-averaged weight rows (prefix-length rows summing to 1).
pub(crate) fn dense_attention_block(
    tape: &mut Tape,
    bound: &BoundParams,
    config: &ModelConfig,
    layer: usize,
    xn: TensorId,
    want_dist: bool,
) -> Result<(TensorId, Option<Distribution>)> {
    let l = tape.shape(xn)[0];
    let (d, heads, dh) = (config.d_model, config.n_heads, config.head_dim());

    let q = tape.matmul(xn, bound.layer(layer, "attn.wq"))?;
    let k = tape.matmul(xn, bound.layer(layer, "attn.wk"))?;
    let v = tape.matmul(xn, bound.layer(layer, "attn.wv"))?;

    // Additive causal mask: 0 on and below the diagonal.
    let mut mask = vec![0.0; l * l];
    for t in 0..l {
        for s in t + 1..l {
            mask[t * l + s] = MASK_VALUE;
        }
    }
    let mask = tape.constant(mask, vec![l, l])?;

    let mut head_outs = Vec::with_capacity(heads);
    let mut weight_sum: Option<Vec<f64>> = want_dist.then(|| vec![0.0; l * l]);
    for h in 0..heads {
        let cols = head_columns(l, d, h, dh);
        let qh = tape.gather(q, cols.clone(), vec![l, dh])?;
        let kh = tape.gather(k, cols.clone(), vec![l, dh])?;
        let vh = tape.gather(v, cols, vec![l, dh])?;
        let kt = tape.transpose(kh)?;
        let scores = tape.matmul(qh, kt)?;
        let scaled = tape.scale(scores, 1.0 / (dh as f64).sqrt());
        let masked = tape.add(scaled, mask)?;
        let weights = tape.softmax_last(masked);
        if let Some(acc) = weight_sum.as_mut() {
            for (a, &w) in acc.iter_mut().zip(tape.value(weights)) {
                *a += w;
            }
        }
        head_outs.push(tape.matmul(weights, vh)?);
    }

    // Head blocks are [L, dh] each; interleave back to [L, d] row-major.
    let stacked = tape.concat(&head_outs, vec![heads * l * dh])?;
    let mut perm = Vec::with_capacity(l * d);
    for t in 0..l {
        for h in 0..heads {
            let base = h * l * dh + t * dh;
            perm.extend(base..base + dh);
        }
    }
    let merged = tape.gather(stacked, perm, vec![l, d])?;
    let out = tape.matmul(merged, bound.layer(layer, "attn.wo"))?;

    let dist = weight_sum.map(|acc| Distribution {
        rows: (0..l)
            .map(|t| acc[t * l..t * l + t + 1].iter().map(|&w| w / heads as f64).collect())
            .collect(),
    });
    Ok((out, dist))
}

/// Core attention restricted to the selected positions of each query.
///
/// Computed per query position over exactly `|T_t|` gathered rows, so
/// cost (and the MAC counter) is `2 * sum_t |T_t| * dh` per head.
/// Optionally returns the head-averaged weight rows over the selected
/// positions.
pub(crate) fn sparse_attention_block(
    tape: &mut Tape,
    bound: &BoundParams,
    config: &ModelConfig,
    layer: usize,
    xn: TensorId,
    indices: &TopKIndexSet,
    want_dist: bool,
    stats: &mut ForwardStats,
) -> Result<(TensorId, Option<Distribution>)> {
    let l = tape.shape(xn)[0];
    indices.validate(l, config.top_k)?;
    let (d, heads, dh) = (config.d_model, config.n_heads, config.head_dim());

    let q = tape.matmul(xn, bound.layer(layer, "attn.wq"))?;
    let k = tape.matmul(xn, bound.layer(layer, "attn.wk"))?;
    let v = tape.matmul(xn, bound.layer(layer, "attn.wv"))?;

    let mut head_rows: Vec<Vec<TensorId>> = vec![Vec::with_capacity(l); heads];
    let mut weight_sum: Option<Vec<Vec<f64>>> =
        want_dist.then(|| indices.rows.iter().map(|r| vec![0.0; r.len()]).collect());
    let scale = 1.0 / (dh as f64).sqrt();
    for h in 0..heads {
        let cols = head_columns(l, d, h, dh);
        let qh = tape.gather(q, cols.clone(), vec![l, dh])?;
        let kh = tape.gather(k, cols.clone(), vec![l, dh])?;
        let vh = tape.gather(v, cols, vec![l, dh])?;
        for t in 0..l {
            let sel = &indices.rows[t];
            let m = sel.len();
            let k_sel = tape.gather_rows(kh, sel.clone())?;
            let v_sel = tape.gather_rows(vh, sel.clone())?;
            let q_t = tape.slice_range(qh, t * dh, vec![1, dh])?;
            let kt = tape.transpose(k_sel)?;
            let scores = tape.matmul(q_t, kt)?;
            let scaled = tape.scale(scores, scale);
            let weights = tape.softmax_last(scaled);
            if let Some(acc) = weight_sum.as_mut() {
                for (a, &w) in acc[t].iter_mut().zip(tape.value(weights)) {
                    *a += w;
                }
            }
            head_rows[h].push(tape.matmul(weights, v_sel)?);
            stats.core_attn_macs += 2 * (m * dh) as u64;
        }
    }

    let mut rows = Vec::with_capacity(l);
    for t in 0..l {
        let parts: Vec<TensorId> = (0..heads).map(|h| head_rows[h][t]).collect();
        rows.push(tape.concat(&parts, vec![1, d])?);
    }
    let merged = tape.concat(&rows, vec![l, d])?;
    let out = tape.matmul(merged, bound.layer(layer, "attn.wo"))?;

    let dist = weight_sum.map(|acc| Distribution {
        rows: acc
            .into_iter()
            .map(|row| row.into_iter().map(|w| w / heads as f64).collect())
            .collect(),
    });
    Ok((out, dist))
}

/// Pre-norm FFN with one hidden ReLU layer, residual included.
pub(crate) fn ffn_block(
    tape: &mut Tape,
    bound: &BoundParams,
    _config: &ModelConfig,
    layer: usize,
    x: TensorId,
) -> Result<TensorId> {
    let yn = tape.layer_norm(x, bound.layer(layer, "ffn.ln_g"), bound.layer(layer, "ffn.ln_b"), 1e-5)?;
    let h1 = tape.matmul(yn, bound.layer(layer, "ffn.w1"))?;
    let h1 = tape.add_bias(h1, bound.layer(layer, "ffn.b1"))?;
    let hr = tape.relu(h1);
    let h2 = tape.matmul(hr, bound.layer(layer, "ffn.w2"))?;
    let h2 = tape.add_bias(h2, bound.layer(layer, "ffn.b2"))?;
    tape.add(x, h2)
}

/// Final layer norm and unembedding: `[L, vocab]`.
pub(crate) fn lm_head(tape: &mut Tape, bound: &BoundParams, _config: &ModelConfig, x: TensorId) -> Result<TensorId> {
    let xf = tape.layer_norm(x, bound.id("final.ln_g"), bound.id("final.ln_b"), 1e-5)?;
    tape.matmul(xf, bound.id("unembed"))
}

/// Mean next-token cross-entropy: positions `0..L-1` predict
/// `tokens[1..]`. Returns the scalar loss id and the number of
/// predicted tokens.
pub fn lm_cross_entropy(tape: &mut Tape, logits: TensorId, tokens: &[usize]) -> Result<(TensorId, usize)> {
    let l = tokens.len();
    if l < 2 {
        return Err(Error::EmptyInput { what: "next-token targets (need length >= 2)" });
    }
    let vocab = tape.shape(logits)[1];
    let probs = tape.softmax_last(logits);
    let idx: Vec<usize> = (0..l - 1).map(|t| t * vocab + tokens[t + 1]).collect();
    let sel = tape.gather(probs, idx, vec![l - 1])?;
    let lp = tape.log(sel);
    let total = tape.sum_all(lp);
    Ok((tape.scale(total, -1.0 / (l - 1) as f64), l - 1))
}
