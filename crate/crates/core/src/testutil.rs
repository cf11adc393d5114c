//! Shared fixtures for unit tests.

use crate::autodiff::Tensor;
use crate::data::{build_vocab, InstructionSet};
use crate::model::{ModelConfig, RewardModel};
use crate::rng::RngKey;

pub(crate) fn small_config() -> ModelConfig {
    ModelConfig {
        embed_dim: 16,
        num_layers: 2,
        num_heads: 2,
        head_hidden_dim: 12,
        mlp_hidden_dim: 24,
        max_seq_len: 96,
        ..Default::default()
    }
}

pub(crate) fn words() -> Vec<String> {
    (0..40).map(|i| format!("w{i:03}")).collect()
}

/// A random model whose output layer is non-zero.
pub(crate) fn small_model(seed: u64) -> RewardModel {
    let set = InstructionSet::bundled();
    let vocab = build_vocab(&set, &words()).unwrap();
    let mut m = RewardModel::init(small_config(), vocab, seed).unwrap();
    randomize_head(&mut m, seed);
    m
}

/// The zero-initialised output layer makes every reward 0; give it
/// weights so the head is informative.
pub(crate) fn randomize_head(m: &mut RewardModel, seed: u64) {
    let key = RngKey::new(seed).derive(77);
    let h = m.config().head_hidden_dim;
    *m.params_mut().get_mut("head.w2").unwrap() =
        Tensor::from_fn(h, 1, |r, _| (key.uniform(r as u64) * 2.0 - 1.0) as f32);
    *m.params_mut().get_mut("head.b2").unwrap() = Tensor::scalar(0.25);
}

/// `len` random words from the fixture vocabulary.
pub(crate) fn text(key: RngKey, len: usize) -> String {
    (0..len)
        .map(|i| format!("w{:03}", key.bits(i as u64) % 40))
        .collect::<Vec<_>>()
        .join(" ")
}

pub(crate) fn std_dev(xs: &[f64]) -> f64 {
    let n = xs.len() as f64;
    let mean = xs.iter().sum::<f64>() / n;
    (xs.iter().map(|x| (x - mean).powi(2)).sum::<f64>() / (n - 1.0)).sqrt()
}
