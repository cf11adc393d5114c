use std::path::Path;

use serde::{Deserialize, Serialize};

use crate::error::{Error, Result};

use super::vocab::{TokenId, Vocab, BOS, QUESTION_HEADER, RESPONSE_HEADER, SEP};

const BUNDLED: &str = include_str!("../../assets/instructions.json");

#[derive(Clone, Debug, PartialEq, Eq, Serialize, Deserialize)]
pub struct InstructionTemplate {
    pub id: u32,
    pub text: String,
}

/// The preference instruction set together with its slot layout.
#[derive(Clone, Debug, PartialEq, Eq, Serialize, Deserialize)]
pub struct InstructionSet {
    slot_template: String,
    #[serde(rename = "instructions")]
    templates: Vec<InstructionTemplate>,
}

/// How a (question, response) pair is laid out as model input.
#[derive(Clone, Copy, Debug, Default, PartialEq, Eq, Hash, Serialize, Deserialize)]
#[serde(rename_all = "snake_case")]
pub enum InputFormat {
    /// `[t; x; y]` with the instruction and slot headers.
    #[default]
    Instructed,
    /// Question and response concatenated directly, no instruction.
    Plain,
}

fn validate_slots(slot_template: &str) -> Result<()> {
    let positions: Vec<Option<usize>> = ["{t}", "{q}", "{a}"]
        .iter()
        .map(|s| {
            (slot_template.matches(s).count() == 1)
                .then(|| slot_template.find(s))
                .flatten()
        })
        .collect();
    match positions[..] {
        [Some(t), Some(q), Some(a)] if t < q && q < a => Ok(()),
        _ => Err(Error::Validation(
            "slot_template must contain {t}, {q}, {a} exactly once each, in that order".into(),
        )),
    }
}

impl InstructionSet {
    pub fn new(slot_template: String, templates: Vec<InstructionTemplate>) -> Result<Self> {
        validate_slots(&slot_template)?;
        if templates.is_empty() {
            return Err(Error::Validation("instruction set is empty".into()));
        }
        for (i, t) in templates.iter().enumerate() {
            if t.text.trim().is_empty() {
                return Err(Error::Validation(format!("instruction {} (entry {i}) has empty text", t.id)));
            }
            if templates[..i].iter().any(|o| o.id == t.id) {
                return Err(Error::Validation(format!("duplicate instruction id {} at entry {i}", t.id)));
            }
        }
        Ok(InstructionSet {
            slot_template,
            templates,
        })
    }

    /// The ten evaluation instructions shipped with the crate.
    pub fn bundled() -> Self {
        Self::from_json_str(BUNDLED).expect("bundled instruction file is valid")
    }

    pub fn bundled_json() -> &'static str {
        BUNDLED
    }

    pub fn from_json_str(s: &str) -> Result<Self> {
        let malformed = |detail: String| Error::Malformed {
            what: "instruction file".into(),
            detail,
        };
        let root: serde_json::Value = serde_json::from_str(s).map_err(|e| malformed(e.to_string()))?;
        let slot_template = root
            .get("slot_template")
            .and_then(|v| v.as_str())
            .ok_or_else(|| malformed("missing string field \"slot_template\"".into()))?
            .to_string();
        let entries = root
            .get("instructions")
            .and_then(|v| v.as_array())
            .ok_or_else(|| malformed("missing array field \"instructions\"".into()))?;
        let templates = entries
            .iter()
            .enumerate()
            .map(|(i, e)| {
                InstructionTemplate::deserialize(e).map_err(|err| malformed(format!("instructions[{i}]: {err}")))
            })
            .collect::<Result<Vec<_>>>()?;
        Self::new(slot_template, templates)
    }

    pub fn to_json(&self) -> String {
        serde_json::to_string_pretty(self).expect("instruction set serialises")
    }

    pub fn len(&self) -> usize {
        self.templates.len()
    }

    pub fn is_empty(&self) -> bool {
        self.templates.is_empty()
    }

    pub fn templates(&self) -> &[InstructionTemplate] {
        &self.templates
    }

    pub fn slot_template(&self) -> &str {
        &self.slot_template
    }

    pub fn get(&self, k: usize) -> Option<&InstructionTemplate> {
        self.templates.get(k)
    }

    pub fn position_of(&self, id: u32) -> Option<usize> {
        self.templates.iter().position(|t| t.id == id)
    }

    /// Plain-text rendering of instruction `k` through the slot template.
    pub fn render(&self, k: usize, question: &str, response: &str) -> String {
        self.slot_template
            .replace("{t}", &self.templates[k].text)
            .replace("{q}", question)
            .replace("{a}", response)
    }

    /// All words appearing in instruction texts, for vocabulary building.
    pub fn words(&self) -> impl Iterator<Item = &str> {
        self.templates.iter().flat_map(|t| t.text.split_whitespace())
    }
}

pub fn load_instruction_set(path: impl AsRef<Path>) -> Result<InstructionSet> {
    let path = path.as_ref();
    let s = std::fs::read_to_string(path).map_err(|e| Error::io(path, e))?;
    InstructionSet::from_json_str(&s)
}

/// Builds the model input for instruction `k`:
/// `BOS t SEP question: q SEP response: a`, or `BOS q SEP a` for the
/// plain format (which ignores `k`).
pub fn assemble_input(
    format: InputFormat,
    set: &InstructionSet,
    k: usize,
    question: &str,
    response: &str,
    vocab: &Vocab,
) -> Result<Vec<TokenId>> {
    let q = vocab.tokenize(question);
    let a = vocab.tokenize(response);
    let mut seq = Vec::new();
    seq.push(BOS);
    match format {
        InputFormat::Instructed => {
            let t = set
                .get(k)
                .ok_or_else(|| Error::config("instruction", format!("index {k} out of range for {} templates", set.len())))?;
            seq.extend(vocab.tokenize(&t.text));
            seq.extend([SEP, QUESTION_HEADER]);
            seq.extend(q);
            seq.extend([SEP, RESPONSE_HEADER]);
        }
        InputFormat::Plain => {
            seq.extend(q);
            seq.push(SEP);
        }
    }
    seq.extend(a);
    Ok(seq)
}
