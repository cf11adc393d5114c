//! Bradley-Terry training with dual learning rates and AdamW.

mod optim;
#[cfg(test)]
mod tests;

use std::path::Path;

use serde::{Deserialize, Serialize};

use crate::autodiff::{finite_diff_check, softplus, GradCheckReport, Real, Tape, Tensor, Var};
use crate::data::{InstructionSet, PreferenceExample, Vocab};
use crate::error::{Error, Result};
use crate::model::{
    backbone_forward, group_of, head_forward, is_frozen, Bound, Mode, ModelConfig, ParamGroup, RewardModel,
    TrainingMeta,
};
use crate::rng::RngKey;

pub use optim::{AdamWConfig, OptimizerState};

/// `-ln σ(r_chosen - r_rejected)` in the stable softplus form.
pub fn bt_loss(r_chosen: f64, r_rejected: f64) -> f64 {
    softplus(r_rejected - r_chosen)
}

/// Linear warmup from 0 over the first `warmup_ratio · total_steps`
/// steps, constant afterwards.
pub fn lr_at(step: usize, total_steps: usize, base_lr: f64, warmup_ratio: f64) -> f64 {
    let warmup = warmup_ratio * total_steps as f64;
    if warmup <= 0.0 || step as f64 >= warmup {
        base_lr
    } else {
        base_lr * step as f64 / warmup
    }
}

#[derive(Clone, Copy, Debug, Default, PartialEq, Eq, Serialize, Deserialize)]
#[serde(rename_all = "snake_case")]
pub enum InstructionSampling {
    /// A fresh instruction per instance per epoch.
    #[default]
    PerInstance,
    /// One instruction per example for the whole run.
    Fixed,
}

#[derive(Clone, Debug, PartialEq, Serialize, Deserialize)]
#[serde(default, deny_unknown_fields)]
pub struct TrainConfig {
    pub lr_backbone: f64,
    pub lr_head: f64,
    pub batch_size: usize,
    pub epochs: usize,
    pub warmup_ratio: f64,
    /// Backbone dropout rate during training. The head uses the model's
    /// `head_dropout_default`.
    pub train_dropout: f64,
    pub seed: u64,
    pub instruction_sampling: InstructionSampling,
    pub weight_decay: f64,
    /// Global gradient-norm clip; `None` disables clipping.
    pub grad_clip: Option<f64>,
}

impl Default for TrainConfig {
    fn default() -> Self {
        TrainConfig {
            lr_backbone: 1e-3,
            lr_head: 5e-3,
            batch_size: 32,
            epochs: 2,
            warmup_ratio: 0.05,
            train_dropout: 0.05,
            seed: 42,
            instruction_sampling: InstructionSampling::PerInstance,
            weight_decay: 0.01,
            grad_clip: Some(1.0),
        }
    }
}

impl TrainConfig {
    pub fn validate(&self) -> Result<()> {
        for (field, lr) in [("train.lr_backbone", self.lr_backbone), ("train.lr_head", self.lr_head)] {
            if !(lr.is_finite() && lr >= 0.0) {
                return Err(Error::config(field, "must be finite and non-negative"));
            }
        }
        if self.batch_size == 0 {
            return Err(Error::config("train.batch_size", "must be positive"));
        }
        if self.epochs == 0 {
            return Err(Error::config("train.epochs", "must be positive"));
        }
        if !(0.0..1.0).contains(&self.warmup_ratio) {
            return Err(Error::config("train.warmup_ratio", "must lie in [0, 1)"));
        }
        if !(0.0..1.0).contains(&self.train_dropout) {
            return Err(Error::config("train.train_dropout", "must lie in [0, 1)"));
        }
        if !(self.weight_decay.is_finite() && self.weight_decay >= 0.0) {
            return Err(Error::config("train.weight_decay", "must be finite and non-negative"));
        }
        if let Some(c) = self.grad_clip {
            if !(c.is_finite() && c > 0.0) {
                return Err(Error::config("train.grad_clip", "must be positive"));
            }
        }
        Ok(())
    }

    fn lr(&self, group: ParamGroup) -> f64 {
        match group {
            ParamGroup::Backbone => self.lr_backbone,
            ParamGroup::Head => self.lr_head,
        }
    }
}

#[derive(Clone, Copy, Debug, Default, PartialEq, Serialize, Deserialize)]
pub struct BatchMetrics {
    /// Mean loss per pair.
    pub loss: f64,
    /// Fraction of pairs with `r_chosen > r_rejected`; ties count half.
    pub pair_accuracy: f64,
    pub grad_norm_backbone: f64,
    pub grad_norm_head: f64,
}

/// One row of the metrics history.
#[derive(Clone, Copy, Debug, PartialEq, Serialize, Deserialize)]
pub struct StepRecord {
    pub step: usize,
    pub loss: f64,
    pub pair_accuracy: f64,
    pub lr_backbone: f64,
    pub lr_head: f64,
    pub grad_norm_backbone: f64,
    pub grad_norm_head: f64,
}

/// Where a step sits in the run.
#[derive(Clone, Copy, Debug)]
pub struct StepContext {
    pub step: usize,
    pub total_steps: usize,
    /// Per-batch key; instance `i` uses `key.derive(i)`.
    pub key: RngKey,
}

const KEY_BATCH: u64 = 1;
const KEY_SHUFFLE: u64 = 2;
const KEY_FIXED: u64 = 3;
const KEY_INIT: u64 = 4;

const SUB_BACKBONE: u64 = 0;
const SUB_HEAD: u64 = 1;
const SUB_INSTRUCTION: u64 = 2;

/// FNV-1a over the example text, so fixed instruction choices follow the
/// example rather than its position.
fn example_hash(ex: &PreferenceExample) -> u64 {
    let mut h: u64 = 0xcbf2_9ce4_8422_2325;
    for part in [&ex.question, &ex.chosen, &ex.rejected] {
        for b in part.bytes().chain([0xff]) {
            h ^= b as u64;
            h = h.wrapping_mul(0x0100_0000_01b3);
        }
    }
    h
}

fn instruction_for(cfg: &TrainConfig, set: &InstructionSet, ex: &PreferenceExample, key: RngKey) -> usize {
    let draw = match cfg.instruction_sampling {
        InstructionSampling::PerInstance => key.derive(SUB_INSTRUCTION).bits(0),
        InstructionSampling::Fixed => RngKey::new(cfg.seed).derive(KEY_FIXED).bits(example_hash(ex)),
    };
    (draw % set.len() as u64) as usize
}

/// Bradley-Terry loss of one pair on `tape`. Chosen and rejected passes
/// share every dropout mask. Returns `(loss, delta)`.
pub(crate) fn pair_loss<T: Real>(
    tape: &mut Tape<T>,
    cfg: &ModelConfig,
    bound: &Bound,
    chosen: &[usize],
    rejected: &[usize],
    backbone_rate: f64,
    key: RngKey,
) -> Result<(Var, Var)> {
    let mode = if backbone_rate > 0.0 {
        Mode::Train {
            rate: backbone_rate,
            key: key.derive(SUB_BACKBONE),
        }
    } else {
        Mode::Inference
    };
    let head_key = key.derive(SUB_HEAD);
    let delta = cfg.head_dropout_default;
    let uc = backbone_forward(tape, cfg, bound, chosen, mode)?;
    let rc = head_forward(tape, bound, uc, delta, head_key)?;
    let ur = backbone_forward(tape, cfg, bound, rejected, mode)?;
    let rr = head_forward(tape, bound, ur, delta, head_key)?;
    let d = tape.sub(rc, rr)?;
    let neg = tape.scale(d, -1.0)?;
    Ok((tape.softplus(neg)?, d))
}

/// Compares the reverse-mode gradient of one pair's loss with central
/// differences, in double precision, over `samples` parameter elements.
/// Every dropout mask is fixed by `key`.
#[allow(clippy::too_many_arguments)]
pub fn check_pair_gradient(
    model: &RewardModel,
    set: &InstructionSet,
    example: &PreferenceExample,
    k: usize,
    backbone_rate: f64,
    key: RngKey,
    epsilon: f64,
    samples: usize,
) -> Result<GradCheckReport> {
    let cfg = model.config().clone();
    let chosen = model.assemble(set, k, &example.question, &example.chosen)?;
    let rejected = model.assemble(set, k, &example.question, &example.rejected)?;
    let params = model.params().cast::<f64>();
    let names: Vec<String> = params.names().map(str::to_string).collect();
    let tensors: Vec<Tensor<f64>> = params.iter().map(|(_, t)| t.clone()).collect();
    finite_diff_check(
        &tensors,
        |tape, vars| {
            let bound = Bound::from_pairs(names.iter().cloned().zip(vars.iter().copied()));
            pair_loss(tape, &cfg, &bound, &chosen, &rejected, backbone_rate, key).map(|(l, _)| l)
        },
        epsilon,
        samples,
        key.derive(0x6c),
    )
}

fn diverged(step: usize, e: Error) -> Error {
    match e {
        Error::Autodiff(inner) => Error::Diverged {
            step,
            detail: inner.to_string(),
        },
        other => other,
    }
}

/// One optimizer step on `batch`.
pub fn train_step(
    model: &mut RewardModel,
    opt: &mut OptimizerState,
    batch: &[PreferenceExample],
    set: &InstructionSet,
    cfg: &TrainConfig,
    ctx: StepContext,
) -> Result<BatchMetrics> {
    if batch.is_empty() {
        return Err(Error::Validation("empty training batch".into()));
    }
    let mcfg = model.config().clone();
    let names: Vec<String> = model.params().names().map(str::to_string).collect();
    let mut grads: Vec<Option<Tensor<f32>>> = vec![None; names.len()];
    let mut loss_sum = 0.0;
    let mut correct = 0.0;

    for (i, ex) in batch.iter().enumerate() {
        let key = ctx.key.derive(i as u64);
        let k = instruction_for(cfg, set, ex, key);
        let chosen = model.assemble(set, k, &ex.question, &ex.chosen)?;
        let rejected = model.assemble(set, k, &ex.question, &ex.rejected)?;
        let mut tape = Tape::<f32>::new();
        let bound = model.params().bind(&mut tape, |n| !is_frozen(&mcfg, n));
        let (loss, d) = pair_loss(&mut tape, &mcfg, &bound, &chosen, &rejected, cfg.train_dropout, key)
            .map_err(|e| diverged(ctx.step, e))?;
        let l = tape.value(loss).item() as f64;
        if !l.is_finite() {
            return Err(Error::Diverged {
                step: ctx.step,
                detail: format!("non-finite loss on instance {i}"),
            });
        }
        loss_sum += l;
        let delta = tape.value(d).item();
        correct += if delta > 0.0 {
            1.0
        } else if delta == 0.0 {
            0.5
        } else {
            0.0
        };
        let mut g = tape.backward(loss).map_err(|e| diverged(ctx.step, e.into()))?;
        for (slot, (_, v)) in grads.iter_mut().zip(bound.iter()) {
            if let Some(t) = g.take(v) {
                match slot {
                    Some(acc) => acc.data_mut().iter_mut().zip(t.data()).for_each(|(a, b)| *a += b),
                    None => *slot = Some(t),
                }
            }
        }
    }

    let mut sq = [0.0f64; 2];
    for (name, g) in names.iter().zip(&grads) {
        if let Some(g) = g {
            sq[(group_of(name) == ParamGroup::Head) as usize] += g.sq_norm();
        }
    }
    let (norm_b, norm_h) = (sq[0].sqrt(), sq[1].sqrt());
    let total = (sq[0] + sq[1]).sqrt();
    if !total.is_finite() {
        return Err(Error::Diverged {
            step: ctx.step,
            detail: "non-finite gradient norm".into(),
        });
    }
    let clip = match cfg.grad_clip {
        Some(c) if total > c => c / total,
        _ => 1.0,
    };

    opt.step += 1;
    for (name, g) in names.iter().zip(grads) {
        let Some(g) = g else { continue };
        let lr = lr_at(ctx.step, ctx.total_steps, cfg.lr(group_of(name)), cfg.warmup_ratio);
        let p = model.params_mut().get_mut(name).expect("parameter listed by names()");
        opt.update(name, p, &g, clip, lr, cfg.weight_decay);
    }

    let n = batch.len() as f64;
    Ok(BatchMetrics {
        loss: loss_sum / n,
        pair_accuracy: correct / n,
        grad_norm_backbone: norm_b,
        grad_norm_head: norm_h,
    })
}

/// A trained model with its metadata and per-step history.
#[derive(Clone, Debug)]
pub struct TrainOutcome {
    pub model: RewardModel,
    pub meta: TrainingMeta,
    pub history: Vec<StepRecord>,
}

/// Initialises a model from `train_cfg.seed` and trains it on `corpus`.
pub fn train(
    corpus: &[PreferenceExample],
    set: &InstructionSet,
    model_cfg: &ModelConfig,
    vocab: Vocab,
    train_cfg: &TrainConfig,
) -> Result<TrainOutcome> {
    let model = RewardModel::init(model_cfg.clone(), vocab, RngKey::new(train_cfg.seed).derive(KEY_INIT).raw())?;
    train_model(model, corpus, set, train_cfg)
}

/// Trains an existing model: `epochs` passes over `corpus`, reshuffled
/// from the seed each epoch.
pub fn train_model(
    mut model: RewardModel,
    corpus: &[PreferenceExample],
    set: &InstructionSet,
    cfg: &TrainConfig,
) -> Result<TrainOutcome> {
    cfg.validate()?;
    if corpus.is_empty() {
        return Err(Error::Validation("training corpus is empty".into()));
    }
    for ex in corpus {
        ex.validate()?;
    }
    let root = RngKey::new(cfg.seed);
    let batches = corpus.len().div_ceil(cfg.batch_size);
    let total_steps = cfg.epochs * batches;
    let mut opt = OptimizerState::new(AdamWConfig::default());
    let mut history = Vec::with_capacity(total_steps);
    let mut order: Vec<usize> = (0..corpus.len()).collect();
    let mut step = 0;
    for epoch in 0..cfg.epochs {
        use rand::seq::SliceRandom;
        order.sort_unstable();
        order.shuffle(&mut root.derive_path(&[KEY_SHUFFLE, epoch as u64]).rng());
        for (b, chunk) in order.chunks(cfg.batch_size).enumerate() {
            let batch: Vec<PreferenceExample> = chunk.iter().map(|&i| corpus[i].clone()).collect();
            let ctx = StepContext {
                step,
                total_steps,
                key: root.derive_path(&[KEY_BATCH, epoch as u64, b as u64]),
            };
            let m = train_step(&mut model, &mut opt, &batch, set, cfg, ctx)?;
            history.push(StepRecord {
                step,
                loss: m.loss,
                pair_accuracy: m.pair_accuracy,
                lr_backbone: lr_at(step, total_steps, cfg.lr_backbone, cfg.warmup_ratio),
                lr_head: lr_at(step, total_steps, cfg.lr_head, cfg.warmup_ratio),
                grad_norm_backbone: m.grad_norm_backbone,
                grad_norm_head: m.grad_norm_head,
            });
            step += 1;
        }
    }
    Ok(TrainOutcome {
        model,
        meta: TrainingMeta {
            step: step as u64,
            seed: cfg.seed,
        },
        history,
    })
}

pub fn write_metrics_csv(path: impl AsRef<Path>, history: &[StepRecord]) -> Result<()> {
    let path = path.as_ref();
    let mut w = csv::Writer::from_path(path).map_err(|e| Error::io(path, e.into()))?;
    for r in history {
        w.serialize(r)?;
    }
    w.flush().map_err(|e| Error::io(path, e))?;
    Ok(())
}
