use serde::{Deserialize, Serialize};

use crate::data::InputFormat;
use crate::error::{Error, Result};

#[derive(Clone, Debug, PartialEq, Serialize, Deserialize)]
#[serde(default, deny_unknown_fields)]
pub struct ModelConfig {
    pub vocab_size: usize,
    pub embed_dim: usize,
    pub num_layers: usize,
    pub num_heads: usize,
    pub head_hidden_dim: usize,
    pub mlp_hidden_dim: usize,
    pub max_seq_len: usize,
    /// Value-head dropout rate used during training.
    pub head_dropout_default: f64,
    pub adapter_rank: Option<usize>,
    pub adapter_alpha: Option<f64>,
    pub input_format: InputFormat,
}

impl Default for ModelConfig {
    fn default() -> Self {
        ModelConfig {
            vocab_size: 512,
            embed_dim: 64,
            num_layers: 2,
            num_heads: 2,
            head_hidden_dim: 64,
            mlp_hidden_dim: 128,
            max_seq_len: 256,
            head_dropout_default: 0.05,
            adapter_rank: None,
            adapter_alpha: None,
            input_format: InputFormat::Instructed,
        }
    }
}

impl ModelConfig {
    pub fn validate(&self) -> Result<()> {
        let d = self.embed_dim;
        if d == 0 || self.num_heads == 0 || d % self.num_heads != 0 {
            return Err(Error::config("model.embed_dim", "must be a positive multiple of num_heads"));
        }
        if self.num_layers == 0 {
            return Err(Error::config("model.num_layers", "must be at least 1"));
        }
        if self.vocab_size < 8 {
            return Err(Error::config("model.vocab_size", "must be at least 8"));
        }
        if self.head_hidden_dim == 0 || self.mlp_hidden_dim == 0 || self.max_seq_len == 0 {
            return Err(Error::config("model", "hidden sizes and max_seq_len must be positive"));
        }
        if !(0.0..1.0).contains(&self.head_dropout_default) {
            return Err(Error::config("model.head_dropout_default", "must lie in [0, 1)"));
        }
        match (self.adapter_rank, self.adapter_alpha) {
            (None, None) => {}
            (Some(r), Some(a)) => {
                if r == 0 || r > d {
                    return Err(Error::config("model.adapter_rank", format!("must lie in 1..={d}")));
                }
                if !(a.is_finite() && a > 0.0) {
                    return Err(Error::config("model.adapter_alpha", "must be positive"));
                }
            }
            _ => {
                return Err(Error::config(
                    "model.adapter_rank",
                    "adapter_rank and adapter_alpha must be set together",
                ))
            }
        }
        Ok(())
    }

    pub fn head_dim(&self) -> usize {
        self.embed_dim / self.num_heads
    }

    /// `alpha / rank` when adapters are configured.
    pub fn adapter_scale(&self) -> Option<f64> {
        Some(self.adapter_alpha? / self.adapter_rank? as f64)
    }

    /// Every parameter tensor with its shape, in storage order.
    pub fn param_shapes(&self) -> Vec<(String, [usize; 2])> {
        let (d, v, h, f) = (self.embed_dim, self.vocab_size, self.head_hidden_dim, self.mlp_hidden_dim);
        let mut out = vec![
            ("embed.tok".to_string(), [v, d]),
            ("embed.pos".to_string(), [self.max_seq_len, d]),
        ];
        for l in 0..self.num_layers {
            let p = |s: &str| format!("layer{l}.{s}");
            out.extend([
                (p("ln1.gain"), [1, d]),
                (p("ln1.bias"), [1, d]),
                (p("attn.wq"), [d, d]),
                (p("attn.wk"), [d, d]),
                (p("attn.wv"), [d, d]),
                (p("attn.wo"), [d, d]),
                (p("ln2.gain"), [1, d]),
                (p("ln2.bias"), [1, d]),
                (p("mlp.w1"), [d, f]),
                (p("mlp.b1"), [1, f]),
                (p("mlp.w2"), [f, d]),
                (p("mlp.b2"), [1, d]),
            ]);
            if let Some(r) = self.adapter_rank {
                out.extend([
                    (p("attn.wq.adapter_a"), [d, r]),
                    (p("attn.wq.adapter_b"), [r, d]),
                    (p("attn.wv.adapter_a"), [d, r]),
                    (p("attn.wv.adapter_b"), [r, d]),
                ]);
            }
        }
        out.extend([
            ("final_ln.gain".to_string(), [1, d]),
            ("final_ln.bias".to_string(), [1, d]),
            ("head.w1".to_string(), [d, h]),
            ("head.b1".to_string(), [1, h]),
            ("head.w2".to_string(), [h, 1]),
            ("head.b2".to_string(), [1, 1]),
        ]);
        out
    }
}
