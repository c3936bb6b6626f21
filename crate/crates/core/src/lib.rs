//! Desk-scale sparse attention with per-layer lightning indexers and
//! cross-layer top-k index reuse.
//!
//! Each transformer layer scores all preceding tokens with a lightweight
//! indexer, keeps the top-k, and runs core attention only on that subset.
//! Because adjacent layers select largely the same tokens, most indexers
//! are redundant: layers are partitioned into `F` (Full) layers that run
//! their own indexer and `S` (Shared) layers that reuse the nearest
//! preceding `F` layer's indices. This crate implements the whole method
//! end to end:
//!
//! - [`tensor`]: a minimal f64 tensor engine with reverse-mode autodiff,
//!   exactly the primitives the toy model needs.
//! - [`model`]: the toy decoder-only transformer (indexer + top-k sparse
//!   core attention + FFN per layer).
//! - [`pattern`]: F/S pattern strings, validation, and source-layer maps.
//! - [`engine`]: the index-reuse forward pass (one conditional branch per
//!   layer, one live index buffer).
//! - [`distill`]: multi-layer KL distillation losses and the gradient
//!   equivalence check against the averaged-target form.
//! - [`train`]: two-stage training (dense warm-up for the indexers, then
//!   joint sparse training).
//! - [`search`]: training-free pattern discovery (greedy loss-guided
//!   search, block-accelerated variant, similarity-based DP search, and
//!   brute-force oracles).
//! - [`analysis`]: pairwise top-k overlap matrices, reuse-similarity
//!   matrices, and the analytical MAC cost model.
//! - [`data`]: seeded synthetic copy-task sequences with long-range
//!   dependencies.
//! - [`checkpoint`]: bit-exact binary model persistence.

// pub mod analysis;
// pub mod checkpoint;
// pub mod data;
// pub mod distill;
// pub mod engine;
pub mod error;
pub mod model;
pub mod pattern;
pub mod rng;
// pub mod search;
pub mod tensor;
// pub mod train;

pub use error::{Error, Result};
