//! Preference data: the instruction library, input assembly, the
//! synthetic corpus generator and JSONL IO.

mod corpus;
mod instructions;
mod jsonl;
mod vocab;

pub use corpus::{generate_synthetic_corpus, LenRange, PreferenceExample, SyntheticCorpus, SyntheticCorpusConfig};
pub(crate) use corpus::{neutral_words, sample_response};
pub use instructions::{assemble_input, load_instruction_set, InputFormat, InstructionSet, InstructionTemplate};
pub use jsonl::{load_preference_jsonl, save_preference_jsonl};
pub use vocab::{normalize_word, TokenId, Vocab, BOS, PAD, QUESTION_HEADER, RESPONSE_HEADER, SEP, UNK};

/// Vocabulary covering the instruction words and the corpus content words.
pub fn build_vocab(set: &InstructionSet, content: &[String]) -> crate::Result<Vocab> {
    Vocab::new(set.words().chain(content.iter().map(String::as_str)))
}
