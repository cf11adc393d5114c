//! Two-level inference-time reward aggregation: a mean over `K`
//! instructions of a mean over `M` stochastic value-head passes, each at
//! its own dropout rate. The backbone runs once per instruction.

use std::path::Path;

use serde::{Deserialize, Serialize};

use crate::autodiff::Tensor;
use crate::data::InstructionSet;
use crate::error::{Error, Result};
use crate::model::{Mode, RewardModel};
use crate::rng::RngKey;

/// How instructions are picked when no explicit list is given.
#[derive(Clone, Copy, Debug, Default, PartialEq, Eq, Serialize, Deserialize)]
#[serde(rename_all = "snake_case")]
pub enum InstructionSubset {
    /// The first `K` instructions of the set.
    #[default]
    Leading,
    /// `K` distinct instructions drawn from `base_seed`.
    Random,
}

#[derive(Clone, Debug, PartialEq, Serialize, Deserialize)]
#[serde(default, deny_unknown_fields)]
pub struct AggregationConfig {
    #[serde(rename = "K", alias = "k")]
    pub k: usize,
    #[serde(rename = "M", alias = "m")]
    pub m: usize,
    pub delta_low: f64,
    pub delta_high: f64,
    pub base_seed: u64,
    /// Explicit instruction ids (template ids, repeats allowed). When set,
    /// its length must equal `K`.
    pub instruction_ids: Option<Vec<u32>>,
    pub subset: InstructionSubset,
    /// Reuse one list of `M` rates for every instruction instead of a
    /// fresh rate per cell.
    pub shared_rates: bool,
}

impl Default for AggregationConfig {
    fn default() -> Self {
        AggregationConfig {
            k: 6,
            m: 12,
            delta_low: 0.1,
            delta_high: 0.4,
            base_seed: 0,
            instruction_ids: None,
            subset: InstructionSubset::Leading,
            shared_rates: false,
        }
    }
}

impl AggregationConfig {
    /// Full two-level aggregation at `K=6, M=12, δ ~ U(0.1, 0.4)`.
    pub fn pira() -> Self {
        Self::default()
    }

    /// One deterministic pass on the first instruction.
    pub fn single_pass() -> Self {
        AggregationConfig {
            k: 1,
            m: 1,
            delta_low: 0.0,
            delta_high: 0.0,
            ..Self::default()
        }
    }

    /// Head-only MC dropout at a fixed 0.25 with 4 passes.
    pub fn thomas() -> Self {
        AggregationConfig {
            k: 1,
            m: 4,
            delta_low: 0.25,
            delta_high: 0.25,
            ..Self::default()
        }
    }

    pub fn with_seed(&self, base_seed: u64) -> Self {
        AggregationConfig {
            base_seed,
            ..self.clone()
        }
    }

    pub fn validate(&self, set: &InstructionSet) -> Result<()> {
        if self.k == 0 {
            return Err(Error::config("aggregate.K", "must be at least 1"));
        }
        if self.m == 0 {
            return Err(Error::config("aggregate.M", "must be at least 1"));
        }
        if !(0.0 <= self.delta_low && self.delta_low <= self.delta_high && self.delta_high < 1.0) {
            return Err(Error::config(
                "aggregate.delta",
                format!("need 0 <= delta_low <= delta_high < 1, got [{}, {}]", self.delta_low, self.delta_high),
            ));
        }
        match &self.instruction_ids {
            Some(ids) => {
                if ids.len() != self.k {
                    return Err(Error::config(
                        "aggregate.instruction_ids",
                        format!("{} ids given for K = {}", ids.len(), self.k),
                    ));
                }
                if let Some(bad) = ids.iter().find(|&&id| set.position_of(id).is_none()) {
                    return Err(Error::config("aggregate.instruction_ids", format!("unknown instruction id {bad}")));
                }
            }
            None if self.k > set.len() => {
                return Err(Error::config(
                    "aggregate.K",
                    format!("K = {} exceeds the {} available instructions", self.k, set.len()),
                ));
            }
            None => {}
        }
        Ok(())
    }

    /// Positions in `set` of the `K` instructions this plan evaluates.
    pub fn plan(&self, set: &InstructionSet) -> Result<Vec<usize>> {
        self.validate(set)?;
        Ok(match (&self.instruction_ids, self.subset) {
            (Some(ids), _) => ids.iter().map(|&id| set.position_of(id).expect("validated")).collect(),
            (None, InstructionSubset::Leading) => (0..self.k).collect(),
            (None, InstructionSubset::Random) => {
                let mut rng = self.root().derive(KEY_SUBSET).rng();
                rand::seq::index::sample(&mut rng, set.len(), self.k).into_vec()
            }
        })
    }

    fn root(&self) -> RngKey {
        RngKey::new(self.base_seed)
    }

    /// Dropout rates for row `k`.
    fn row_rates(&self, k: usize) -> Vec<f64> {
        let key = if self.shared_rates {
            self.root().derive(KEY_RATES)
        } else {
            self.root().derive_path(&[KEY_RATES, k as u64])
        };
        sample_dropout_rates(self.m, key, self.delta_low, self.delta_high)
    }

    fn cell_key(&self, k: usize, m: usize) -> RngKey {
        self.root().derive_path(&[KEY_CELL, k as u64, m as u64])
    }
}

const KEY_RATES: u64 = 1;
const KEY_CELL: u64 = 2;
const KEY_SUBSET: u64 = 3;

/// `M` independent draws from `U[lo, hi]`, endpoints included.
pub fn sample_dropout_rates(m: usize, key: RngKey, lo: f64, hi: f64) -> Vec<f64> {
    (0..m)
        .map(|i| {
            if lo == hi {
                lo
            } else {
                (lo + (hi - lo) * key.uniform_closed_f32(i as u64) as f64).clamp(lo, hi)
            }
        })
        .collect()
}

fn mean(xs: impl ExactSizeIterator<Item = f64>) -> f64 {
    let n = xs.len() as f64;
    xs.sum::<f64>() / n
}

/// `M` head passes over one backbone output; returns the mean and the
/// samples. Pass `m` uses `key.derive(m)` and rate `rates[m]`.
fn head_average(model: &RewardModel, u: &Tensor<f32>, rates: &[f64], key: impl Fn(usize) -> RngKey) -> Result<(f64, Vec<f32>)> {
    let samples = rates
        .iter()
        .enumerate()
        .map(|(m, &d)| model.head(u, d, key(m)))
        .collect::<Result<Vec<f32>>>()?;
    Ok((mean(samples.iter().map(|&s| s as f64)), samples))
}

/// `R_stoc`: mean of `m` head passes on `u` at rates drawn from
/// `U[lo, hi]` under `key`.
pub fn stochastic_head_average(
    model: &RewardModel,
    u: &Tensor<f32>,
    m: usize,
    key: RngKey,
    lo: f64,
    hi: f64,
) -> Result<(f64, Vec<f32>)> {
    if m == 0 {
        return Err(Error::config("aggregate.M", "must be at least 1"));
    }
    let rates = sample_dropout_rates(m, key.derive(KEY_RATES), lo, hi);
    head_average(model, u, &rates, |i| key.derive_path(&[KEY_CELL, i as u64]))
}

/// Per-cell samples and both levels of means.
#[derive(Clone, Debug, PartialEq, Serialize, Deserialize)]
pub struct RewardBreakdown {
    /// Template ids of the evaluated instructions, in plan order.
    pub instruction_ids: Vec<u32>,
    /// `K × M` samples, one row per instruction.
    pub samples: Vec<Vec<f32>>,
    /// Dropout rate of each cell, same layout as `samples`.
    pub deltas: Vec<Vec<f64>>,
    /// `R_stoc` for each instruction.
    pub per_instruction: Vec<f64>,
    #[serde(rename = "final")]
    pub final_reward: f64,
}

/// `R(x, y)`: the full `K × M` grid. Runs exactly `K` backbone passes.
pub fn dual_aggregate(
    model: &RewardModel,
    set: &InstructionSet,
    question: &str,
    response: &str,
    cfg: &AggregationConfig,
) -> Result<RewardBreakdown> {
    let plan = cfg.plan(set)?;
    let mut out = RewardBreakdown {
        instruction_ids: Vec::with_capacity(plan.len()),
        samples: Vec::with_capacity(plan.len()),
        deltas: Vec::with_capacity(plan.len()),
        per_instruction: Vec::with_capacity(plan.len()),
        final_reward: 0.0,
    };
    for (k, &pos) in plan.iter().enumerate() {
        let u = model.hidden(set, pos, question, response)?;
        let rates = cfg.row_rates(k);
        let (r, samples) = head_average(model, &u, &rates, |m| cfg.cell_key(k, m))?;
        out.instruction_ids.push(set.templates()[pos].id);
        out.samples.push(samples);
        out.deltas.push(rates);
        out.per_instruction.push(r);
    }
    out.final_reward = mean(out.per_instruction.iter().copied());
    Ok(out)
}

/// `R_inst`: the instruction mean with a deterministic head.
pub fn instruction_average(
    model: &RewardModel,
    set: &InstructionSet,
    question: &str,
    response: &str,
    cfg: &AggregationConfig,
) -> Result<f64> {
    let det = AggregationConfig {
        m: 1,
        delta_low: 0.0,
        delta_high: 0.0,
        ..cfg.clone()
    };
    Ok(dual_aggregate(model, set, question, response, &det)?.final_reward)
}

/// Full-model MC dropout reference: every cell reruns the backbone with
/// dropout at the cell's rate, then one head pass at the same rate.
/// Runs `K × M` backbone passes.
pub fn backbone_rerun_aggregate(
    model: &RewardModel,
    set: &InstructionSet,
    question: &str,
    response: &str,
    cfg: &AggregationConfig,
) -> Result<f64> {
    let plan = cfg.plan(set)?;
    let mut per = Vec::with_capacity(plan.len());
    for (k, &pos) in plan.iter().enumerate() {
        let tokens = model.assemble(set, pos, question, response)?;
        let rates = cfg.row_rates(k);
        let mut acc = 0.0;
        for (m, &rate) in rates.iter().enumerate() {
            let key = cfg.cell_key(k, m);
            let mode = if rate > 0.0 {
                Mode::Train { rate, key: key.derive(KEY_RATES) }
            } else {
                Mode::Inference
            };
            let u = model.hidden_tokens(&tokens, mode)?;
            acc += model.head(&u, rate, key)? as f64;
        }
        per.push(acc / rates.len() as f64);
    }
    Ok(mean(per.into_iter()))
}

#[derive(Serialize)]
struct BreakdownRow {
    k: String,
    m: String,
    delta: String,
    reward: f64,
}

/// CSV with columns `k, m, delta, reward`: one row per cell, then one
/// `R_stoc` row per instruction (`m = "mean"`), then the final `R`
/// (`k = "final"`).
pub fn write_breakdown_csv(path: impl AsRef<Path>, b: &RewardBreakdown) -> Result<()> {
    let path = path.as_ref();
    let mut w = csv::Writer::from_path(path).map_err(|e| Error::io(path, e.into()))?;
    for (k, (row, deltas)) in b.samples.iter().zip(&b.deltas).enumerate() {
        for (m, (&r, &d)) in row.iter().zip(deltas).enumerate() {
            w.serialize(BreakdownRow {
                k: k.to_string(),
                m: m.to_string(),
                delta: d.to_string(),
                reward: r as f64,
            })?;
        }
    }
    for (k, &r) in b.per_instruction.iter().enumerate() {
        w.serialize(BreakdownRow {
            k: k.to_string(),
            m: "mean".into(),
            delta: String::new(),
            reward: r,
        })?;
    }
    w.serialize(BreakdownRow {
        k: "final".into(),
        m: String::new(),
        delta: String::new(),
        reward: b.final_reward,
    })?;
    w.flush().map_err(|e| Error::io(path, e))?;
    Ok(())
}
