//! Shared fixtures for the criterion benchmarks in `benches/`.

use pira_core::data::{build_vocab, generate_synthetic_corpus};
use pira_core::{InstructionSet, ModelConfig, PreferenceExample, RewardModel, SyntheticCorpusConfig};

pub struct Fixture {
    pub model: RewardModel,
    pub set: InstructionSet,
    pub examples: Vec<PreferenceExample>,
}

/// An untrained default-size model with a few test pairs. Timing does not
/// depend on the weights.
pub fn fixture() -> Fixture {
    let set = InstructionSet::bundled();
    let corpus = generate_synthetic_corpus(&SyntheticCorpusConfig {
        num_examples: 16,
        num_test: 16,
        ..SyntheticCorpusConfig::default()
    })
    .expect("corpus");
    let vocab = build_vocab(&set, corpus.gold.content_words()).expect("vocab");
    let model = RewardModel::init(ModelConfig::default(), vocab, 0).expect("model");
    Fixture {
        model,
        set,
        examples: corpus.test,
    }
}
