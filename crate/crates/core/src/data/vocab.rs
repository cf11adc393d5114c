use std::collections::HashMap;

use serde::{Deserialize, Serialize};

use crate::error::{Error, Result};

pub type TokenId = usize;

pub const PAD: TokenId = 0;
pub const BOS: TokenId = 1;
pub const SEP: TokenId = 2;
pub const UNK: TokenId = 3;
pub const QUESTION_HEADER: TokenId = 4;
pub const RESPONSE_HEADER: TokenId = 5;

const SPECIALS: [&str; 6] = ["<pad>", "<bos>", "<sep>", "<unk>", "question:", "response:"];

/// Closed whitespace vocabulary. Ids are dense, specials come first.
#[derive(Clone, Debug, PartialEq, Eq, Serialize, Deserialize)]
#[serde(try_from = "Vec<String>", into = "Vec<String>")]
pub struct Vocab {
    tokens: Vec<String>,
    #[serde(skip)]
    index: HashMap<String, TokenId>,
}

/// Lower-cases a word and trims surrounding punctuation. Returns `None`
/// for words that are punctuation only.
pub fn normalize_word(word: &str) -> Option<String> {
    let w = word.trim_matches(|c: char| !c.is_alphanumeric()).to_lowercase();
    (!w.is_empty()).then_some(w)
}

impl Vocab {
    /// Specials followed by the distinct normalised `words` in first-seen
    /// order.
    pub fn new<'a>(words: impl IntoIterator<Item = &'a str>) -> Result<Self> {
        let mut tokens: Vec<String> = SPECIALS.iter().map(|s| s.to_string()).collect();
        let mut index: HashMap<String, TokenId> =
            tokens.iter().enumerate().map(|(i, t)| (t.clone(), i)).collect();
        for w in words.into_iter().filter_map(normalize_word) {
            if !index.contains_key(&w) {
                index.insert(w.clone(), tokens.len());
                tokens.push(w);
            }
        }
        if tokens.len() < 8 {
            return Err(Error::Validation(format!(
                "vocabulary needs at least 8 tokens, got {}",
                tokens.len()
            )));
        }
        Ok(Vocab { tokens, index })
    }

    pub fn len(&self) -> usize {
        self.tokens.len()
    }

    pub fn is_empty(&self) -> bool {
        self.tokens.is_empty()
    }

    pub fn tokens(&self) -> &[String] {
        &self.tokens
    }

    /// Id of an exact token (specials included) or of a normalised word.
    pub fn id(&self, word: &str) -> TokenId {
        if let Some(&id) = self.index.get(word) {
            return id;
        }
        normalize_word(word)
            .and_then(|w| self.index.get(&w).copied())
            .unwrap_or(UNK)
    }

    pub fn token(&self, id: TokenId) -> Option<&str> {
        self.tokens.get(id).map(String::as_str)
    }

    /// Whitespace tokenisation; unknown words map to `UNK`.
    pub fn tokenize(&self, text: &str) -> Vec<TokenId> {
        text.split_whitespace()
            .filter_map(|w| normalize_word(w).map(|n| self.index.get(&n).copied().unwrap_or(UNK)))
            .collect()
    }
}

impl TryFrom<Vec<String>> for Vocab {
    type Error = Error;

    fn try_from(tokens: Vec<String>) -> Result<Self> {
        if tokens.len() < SPECIALS.len() || tokens[..SPECIALS.len()] != SPECIALS {
            return Err(Error::Validation("vocabulary must start with the special tokens".into()));
        }
        let v = Vocab::new(tokens[SPECIALS.len()..].iter().map(String::as_str))?;
        if v.tokens != tokens {
            return Err(Error::Validation("vocabulary tokens are not distinct and normalised".into()));
        }
        Ok(v)
    }
}

impl From<Vocab> for Vec<String> {
    fn from(v: Vocab) -> Self {
        v.tokens
    }
}
