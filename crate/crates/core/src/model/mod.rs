//! The reward model: a small causal-attention backbone read out at the
//! final position, followed by a two-layer value head with one dropout
//! site.

mod checkpoint;
mod config;
mod forward;
mod params;

use std::sync::atomic::{AtomicU64, Ordering};

pub use checkpoint::{
    decode_checkpoint, encode_checkpoint, load_checkpoint, save_checkpoint, Checkpoint, TrainingMeta, FORMAT_VERSION,
    MAGIC,
};
pub use config::ModelConfig;
pub use forward::{backbone_forward, head_forward, Mode};
pub use params::{group_of, init_params, is_frozen, Bound, ParamGroup, ParamStore};

pub use crate::data::InputFormat;
use crate::autodiff::{Tape, Tensor};
use crate::data::{assemble_input, InstructionSet, TokenId, Vocab};
use crate::error::{Error, Result};
use crate::rng::RngKey;

/// Parameters plus everything needed to turn text into a reward.
#[derive(Debug)]
pub struct RewardModel {
    config: ModelConfig,
    vocab: Vocab,
    params: ParamStore<f32>,
    backbone_passes: AtomicU64,
}

impl Clone for RewardModel {
    fn clone(&self) -> Self {
        RewardModel {
            config: self.config.clone(),
            vocab: self.vocab.clone(),
            params: self.params.clone(),
            backbone_passes: AtomicU64::new(0),
        }
    }
}

impl PartialEq for RewardModel {
    fn eq(&self, other: &Self) -> bool {
        self.config == other.config && self.vocab == other.vocab && self.params == other.params
    }
}

impl RewardModel {
    /// Freshly initialised model. `config.vocab_size` is taken from `vocab`.
    pub fn init(mut config: ModelConfig, vocab: Vocab, seed: u64) -> Result<Self> {
        config.vocab_size = vocab.len();
        config.validate()?;
        let params = init_params(&config, RngKey::new(seed).derive(0x1417));
        Self::from_parts(config, vocab, params)
    }

    pub fn from_parts(config: ModelConfig, vocab: Vocab, params: ParamStore<f32>) -> Result<Self> {
        config.validate()?;
        if vocab.len() != config.vocab_size {
            return Err(Error::ConfigMismatch(format!(
                "vocabulary has {} tokens, config expects {}",
                vocab.len(),
                config.vocab_size
            )));
        }
        for (name, [r, c]) in config.param_shapes() {
            match params.get(&name) {
                Some(t) if t.shape() == [r, c] => {}
                _ => return Err(Error::ConfigMismatch(format!("parameter {name} missing or misshapen"))),
            }
        }
        Ok(RewardModel {
            config,
            vocab,
            params,
            backbone_passes: AtomicU64::new(0),
        })
    }

    pub fn config(&self) -> &ModelConfig {
        &self.config
    }

    pub fn vocab(&self) -> &Vocab {
        &self.vocab
    }

    pub fn params(&self) -> &ParamStore<f32> {
        &self.params
    }

    pub fn params_mut(&mut self) -> &mut ParamStore<f32> {
        &mut self.params
    }

    pub fn format(&self) -> InputFormat {
        self.config.input_format
    }

    /// Number of backbone forwards run through this instance.
    pub fn backbone_passes(&self) -> u64 {
        self.backbone_passes.load(Ordering::Relaxed)
    }

    pub fn assemble(&self, set: &InstructionSet, k: usize, question: &str, response: &str) -> Result<Vec<TokenId>> {
        assemble_input(self.config.input_format, set, k, question, response, &self.vocab)
    }

    /// Backbone forward on `tokens`, returning `u` as a `[1, d]` row.
    pub fn hidden_tokens(&self, tokens: &[TokenId], mode: Mode) -> Result<Tensor<f32>> {
        self.backbone_passes.fetch_add(1, Ordering::Relaxed);
        let mut tape = Tape::new();
        let p = self.params.bind(&mut tape, |_| false);
        let u = backbone_forward(&mut tape, &self.config, &p, tokens, mode)?;
        Ok(tape.value(u).clone())
    }

    /// Deterministic backbone representation of `[t_k; x; y]`.
    pub fn hidden(&self, set: &InstructionSet, k: usize, question: &str, response: &str) -> Result<Tensor<f32>> {
        let tokens = self.assemble(set, k, question, response)?;
        self.hidden_tokens(&tokens, Mode::Inference)
    }

    /// One value-head pass on `u` with dropout rate `delta`.
    pub fn head(&self, u: &Tensor<f32>, delta: f64, key: RngKey) -> Result<f32> {
        let mut tape = Tape::new();
        let p = self.head_bound(&mut tape);
        let uv = tape.constant(u.clone());
        let r = head_forward(&mut tape, &p, uv, delta, key)?;
        Ok(tape.value(r).item())
    }

    fn head_bound(&self, tape: &mut Tape<f32>) -> Bound {
        self.params.bind_only(tape, &["head.w1", "head.b1", "head.w2", "head.b2"])
    }

    /// `r(x, y | t_k)`: head pass at `delta` over the deterministic
    /// backbone representation.
    pub fn reward(
        &self,
        set: &InstructionSet,
        k: usize,
        question: &str,
        response: &str,
        delta: f64,
        key: RngKey,
    ) -> Result<f32> {
        let u = self.hidden(set, k, question, response)?;
        self.head(&u, delta, key)
    }

    /// Parameters with adapter products folded into the base weights and
    /// the adapter tensors removed.
    pub fn merged_params(&self) -> Result<ParamStore<f32>> {
        merge_adapters(&self.config, &self.params)
    }
}

/// Folds `W + (alpha / rank) · A · B` into the query and value
/// projections. Without adapters this is the identity.
pub fn merge_adapters(cfg: &ModelConfig, params: &ParamStore<f32>) -> Result<ParamStore<f32>> {
    let Some(scale) = cfg.adapter_scale() else {
        return Ok(params.clone());
    };
    let mut out = ParamStore::default();
    for (name, t) in params.iter() {
        if name.contains(".adapter_") {
            continue;
        }
        if is_frozen(cfg, name) {
            let mut tape = Tape::<f32>::new();
            let w = tape.constant(t.clone());
            let a = tape.constant(params.get(&format!("{name}.adapter_a")).expect("adapter a").clone());
            let b = tape.constant(params.get(&format!("{name}.adapter_b")).expect("adapter b").clone());
            let ab = tape.matmul(a, b)?;
            let ab = tape.scale(ab, scale)?;
            let e = tape.add(w, ab)?;
            out.insert(name, tape.value(e).clone());
        } else {
            out.insert(name, t.clone());
        }
    }
    Ok(out)
}
