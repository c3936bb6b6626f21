//! Shared helpers for integration tests.

use indexcache_core::model::{Model, ModelConfig};

/// A small but non-degenerate config: 3 layers, 2 heads, vocab 13.
pub fn tiny_config(seed: u64) -> ModelConfig {
    ModelConfig {
        n_layers: 3,
        l_max: 16,
        d_model: 8,
        n_heads: 2,
        n_idx_heads: 2,
        d_idx: 3,
        top_k: 4,
        d_ff: 16,
        vocab_size: 13,
        seed,
    }
}

pub fn tiny_model(seed: u64) -> Model {
    Model::init(tiny_config(seed)).unwrap()
}

pub fn random_tokens(config: &ModelConfig, len: usize, seed: u64) -> Vec<usize> {
    use rand::{Rng, SeedableRng};
    let mut rng = rand::rngs::StdRng::seed_from_u64(seed);
    (0..len).map(|_| rng.random_range(0..config.vocab_size)).collect()
}

pub fn max_abs_diff(a: &[f64], b: &[f64]) -> f64 {
    assert_eq!(a.len(), b.len());
    a.iter().zip(b).map(|(x, y)| (x - y).abs()).fold(0.0, f64::max)
}
