//! Reward models that score an instruction-reformulated `[t; x; y]`
//! input, trained with a Bradley-Terry objective and evaluated with
//! two-level inference-time averaging: over several preference
//! instructions and over stochastic value-head passes at varied dropout
//! rates.
//!
//! Everything runs on a small from-scratch reverse-mode autodiff engine
//! and is deterministic given a seed.

pub mod aggregate;
pub mod autodiff;
pub mod data;
pub mod error;
pub mod eval;
pub mod hacksim;
pub mod model;
pub mod rng;
pub mod training;

#[cfg(test)]
mod testutil;

pub use aggregate::{dual_aggregate, AggregationConfig, RewardBreakdown};
pub use data::{InstructionSet, PreferenceExample, SyntheticCorpusConfig, Vocab};
pub use error::{Error, Result};
pub use model::{InputFormat, ModelConfig, RewardModel};
pub use rng::RngKey;
pub use training::{train, TrainConfig};
