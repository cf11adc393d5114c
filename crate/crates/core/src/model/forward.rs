use crate::autodiff::{DropoutMode, Real, Tape, Var};
use crate::data::TokenId;
use crate::error::{AutodiffError, Error, Result};
use crate::rng::RngKey;

use super::config::ModelConfig;
use super::params::Bound;

pub(crate) const HEAD_DROPOUT_SITE: u64 = 1 << 20;

/// Backbone forward mode.
#[derive(Clone, Copy, Debug, PartialEq)]
pub enum Mode {
    /// No dropout anywhere; a pure function of parameters and tokens.
    Inference,
    /// Dropout after attention and after the MLP of every layer.
    Train { rate: f64, key: RngKey },
}

impl Mode {
    fn site(self, layer: usize, site: u64) -> DropoutMode {
        match self {
            Mode::Inference => DropoutMode::Off,
            Mode::Train { rate, key } => DropoutMode::On {
                rate,
                key: key.derive(layer as u64 * 2 + site),
            },
        }
    }
}

/// `W + (alpha / rank) · A · B` when adapters are configured, else `W`.
pub(crate) fn effective_weight<T: Real>(
    tape: &mut Tape<T>,
    cfg: &ModelConfig,
    p: &Bound,
    name: &str,
) -> Result<Var, AutodiffError> {
    let w = p.var(name);
    let Some(scale) = cfg.adapter_scale() else {
        return Ok(w);
    };
    let a = p.var(&format!("{name}.adapter_a"));
    let b = p.var(&format!("{name}.adapter_b"));
    let ab = tape.matmul(a, b)?;
    let ab = tape.scale(ab, scale)?;
    tape.add(w, ab)
}

fn attention<T: Real>(
    tape: &mut Tape<T>,
    cfg: &ModelConfig,
    p: &Bound,
    l: usize,
    h: Var,
    last_only: bool,
) -> Result<Var, AutodiffError> {
    let name = |s: &str| format!("layer{l}.attn.{s}");
    let wq = effective_weight(tape, cfg, p, &name("wq"))?;
    let wv = effective_weight(tape, cfg, p, &name("wv"))?;
    let k = tape.matmul(h, p.var(&name("wk")))?;
    let v = tape.matmul(h, wv)?;
    let hq = if last_only { tape.index_last(h)? } else { h };
    let q = tape.matmul(hq, wq)?;
    let dh = cfg.head_dim();
    let inv_sqrt = 1.0 / (dh as f64).sqrt();
    let mut heads = Vec::with_capacity(cfg.num_heads);
    for j in 0..cfg.num_heads {
        let qj = tape.slice_cols(q, j * dh, dh)?;
        let kj = tape.slice_cols(k, j * dh, dh)?;
        let vj = tape.slice_cols(v, j * dh, dh)?;
        let s = tape.matmul_nt(qj, kj)?;
        let s = tape.scale(s, inv_sqrt)?;
        let a = tape.softmax_rows(s, true)?;
        heads.push(tape.matmul(a, vj)?);
    }
    let o = if heads.len() == 1 { heads[0] } else { tape.concat_cols(&heads)? };
    tape.matmul(o, p.var(&name("wo")))
}

/// Pre-norm causal transformer; returns the final-position hidden state
/// `u` as a `[1, d]` row. The last layer only computes the final query
/// row, which is all the readout needs.
pub fn backbone_forward<T: Real>(
    tape: &mut Tape<T>,
    cfg: &ModelConfig,
    p: &Bound,
    tokens: &[TokenId],
    mode: Mode,
) -> Result<Var> {
    if tokens.is_empty() {
        return Err(Error::Validation("empty token sequence".into()));
    }
    if tokens.len() > cfg.max_seq_len {
        return Err(Error::SequenceTooLong {
            len: tokens.len(),
            max: cfg.max_seq_len,
        });
    }
    let positions: Vec<usize> = (0..tokens.len()).collect();
    let tok = tape.embedding(p.var("embed.tok"), tokens)?;
    let pos = tape.embedding(p.var("embed.pos"), &positions)?;
    let mut x = tape.add(tok, pos)?;

    for l in 0..cfg.num_layers {
        let name = |s: &str| format!("layer{l}.{s}");
        let last_only = l + 1 == cfg.num_layers;
        let h = tape.layer_norm(x, p.var(&name("ln1.gain")), p.var(&name("ln1.bias")))?;
        let a = attention(tape, cfg, p, l, h, last_only)?;
        let a = tape.dropout(a, mode.site(l, 0))?;
        let resid = if last_only { tape.index_last(x)? } else { x };
        x = tape.add(resid, a)?;

        let h = tape.layer_norm(x, p.var(&name("ln2.gain")), p.var(&name("ln2.bias")))?;
        let m = tape.matmul(h, p.var(&name("mlp.w1")))?;
        let m = tape.add_row(m, p.var(&name("mlp.b1")))?;
        let m = tape.gelu(m)?;
        let m = tape.matmul(m, p.var(&name("mlp.w2")))?;
        let m = tape.add_row(m, p.var(&name("mlp.b2")))?;
        let m = tape.dropout(m, mode.site(l, 1))?;
        x = tape.add(x, m)?;
    }
    let u = tape.layer_norm(x, p.var("final_ln.gain"), p.var("final_ln.bias"))?;
    Ok(u)
}

/// `tanh(u W1 + b1)`, dropout at `delta`, then `· W2 + b2`. Returns a
/// `[1, 1]` reward.
pub fn head_forward<T: Real>(tape: &mut Tape<T>, p: &Bound, u: Var, delta: f64, key: RngKey) -> Result<Var> {
    if !(0.0..1.0).contains(&delta) {
        return Err(Error::config("delta", format!("dropout rate {delta} outside [0, 1)")));
    }
    let h = tape.matmul(u, p.var("head.w1"))?;
    let h = tape.add_row(h, p.var("head.b1"))?;
    let h = tape.tanh(h)?;
    let h = tape.dropout(
        h,
        DropoutMode::On {
            rate: delta,
            key: key.derive(HEAD_DROPOUT_SITE),
        },
    )?;
    let r = tape.matmul(h, p.var("head.w2"))?;
    Ok(tape.add_row(r, p.var("head.b2"))?)
}
