use rand::seq::SliceRandom;
use rand::Rng;
use serde::{Deserialize, Serialize};

use crate::error::{Error, Result};
use crate::hacksim::GoldModel;
use crate::rng::RngKey;

/// One preference triple. Field names carry the semantics; order in files
/// is irrelevant.
#[derive(Clone, Debug, PartialEq, Serialize, Deserialize)]
pub struct PreferenceExample {
    pub question: String,
    pub chosen: String,
    pub rejected: String,
    /// `gold(chosen) - gold(rejected)`; synthetic corpora only. Negative
    /// for pairs whose label was flipped by label noise.
    pub gold_margin: Option<f64>,
}

impl PreferenceExample {
    pub fn validate(&self) -> Result<()> {
        if self.chosen == self.rejected {
            return Err(Error::Validation("chosen and rejected responses are identical".into()));
        }
        if let Some(m) = self.gold_margin {
            if !m.is_finite() || m == 0.0 {
                return Err(Error::Validation(format!("gold_margin must be finite and nonzero, got {m}")));
            }
        }
        Ok(())
    }

    /// The same pair with chosen and rejected exchanged.
    pub fn swapped(&self) -> Self {
        PreferenceExample {
            question: self.question.clone(),
            chosen: self.rejected.clone(),
            rejected: self.chosen.clone(),
            gold_margin: self.gold_margin.map(|m| -m),
        }
    }
}

/// Inclusive length range.
#[derive(Clone, Copy, Debug, PartialEq, Eq, Serialize, Deserialize)]
pub struct LenRange {
    pub min: usize,
    pub max: usize,
}

impl LenRange {
    pub const fn new(min: usize, max: usize) -> Self {
        LenRange { min, max }
    }

    pub fn sample(&self, rng: &mut impl Rng) -> usize {
        rng.gen_range(self.min..=self.max)
    }

    fn validate(&self, field: &str, min_allowed: usize) -> Result<()> {
        if self.min < min_allowed || self.max < self.min {
            return Err(Error::config(field, format!("need {min_allowed} <= min <= max, got {self:?}")));
        }
        Ok(())
    }
}

#[derive(Clone, Debug, PartialEq, Serialize, Deserialize)]
#[serde(default, deny_unknown_fields)]
pub struct SyntheticCorpusConfig {
    /// Number of content words (specials and instruction words excluded).
    pub vocab_size: usize,
    pub num_examples: usize,
    pub num_test: usize,
    pub question_len: LenRange,
    pub response_len: LenRange,
    pub good_tokens: usize,
    pub bad_tokens: usize,
    /// Probability that a response position carries a good or bad word.
    pub feature_rate: f64,
    pub good_token_weight: f64,
    pub bad_token_penalty: f64,
    /// Probability that a training chosen response is padded with neutral
    /// filler. Padding never changes gold, so it plants a length shortcut.
    pub spurious_length_weight: f64,
    pub spurious_pad_len: LenRange,
    pub label_noise: f64,
    pub seed: u64,
}

impl Default for SyntheticCorpusConfig {
    fn default() -> Self {
        SyntheticCorpusConfig {
            vocab_size: 256,
            num_examples: 2000,
            num_test: 500,
            question_len: LenRange::new(3, 6),
            response_len: LenRange::new(4, 14),
            good_tokens: 8,
            bad_tokens: 8,
            feature_rate: 0.5,
            good_token_weight: 1.0,
            bad_token_penalty: 1.0,
            spurious_length_weight: 0.0,
            spurious_pad_len: LenRange::new(2, 6),
            label_noise: 0.0,
            seed: 7,
        }
    }
}

impl SyntheticCorpusConfig {
    pub fn validate(&self) -> Result<()> {
        if self.good_tokens + self.bad_tokens + 8 > self.vocab_size {
            return Err(Error::config(
                "corpus.vocab_size",
                "must exceed good_tokens + bad_tokens by at least 8 neutral words",
            ));
        }
        if self.num_examples == 0 {
            return Err(Error::config("corpus.num_examples", "must be positive"));
        }
        self.question_len.validate("corpus.question_len", 1)?;
        self.response_len.validate("corpus.response_len", 1)?;
        self.spurious_pad_len.validate("corpus.spurious_pad_len", 1)?;
        if !(0.0..0.5).contains(&self.label_noise) {
            return Err(Error::config("corpus.label_noise", "must lie in [0, 0.5)"));
        }
        if !(0.0..=1.0).contains(&self.feature_rate) {
            return Err(Error::config("corpus.feature_rate", "must lie in [0, 1]"));
        }
        if !(0.0..=1.0).contains(&self.spurious_length_weight) {
            return Err(Error::config("corpus.spurious_length_weight", "must lie in [0, 1]"));
        }
        if !(self.good_token_weight > 0.0 && self.bad_token_penalty >= 0.0) {
            return Err(Error::config("corpus.good_token_weight", "weights must be positive"));
        }
        Ok(())
    }

    pub fn gold_model(&self) -> GoldModel {
        let mut ids: Vec<usize> = (0..self.vocab_size).collect();
        ids.shuffle(&mut RngKey::new(self.seed).derive(0).rng());
        GoldModel::new(
            (0..self.vocab_size).map(|i| format!("w{i:03}")).collect(),
            ids[..self.good_tokens].to_vec(),
            ids[self.good_tokens..self.good_tokens + self.bad_tokens].to_vec(),
            self.good_token_weight,
            self.bad_token_penalty,
        )
    }
}

#[derive(Clone, Debug)]
pub struct SyntheticCorpus {
    pub train: Vec<PreferenceExample>,
    pub test: Vec<PreferenceExample>,
    pub gold: GoldModel,
}

/// Draws a response whose words are good with probability
/// `quality * rate`, bad with `(1 - quality) * rate`, neutral otherwise.
pub(crate) fn sample_response(gold: &GoldModel, rng: &mut impl Rng, len: usize, quality: f64, rate: f64) -> Vec<usize> {
    (0..len)
        .map(|_| {
            let u: f64 = rng.gen();
            if u < quality * rate {
                *gold.good_ids().choose(rng).expect("good set is non-empty")
            } else if u < rate {
                *gold.bad_ids().choose(rng).expect("bad set is non-empty")
            } else {
                *gold.neutral_ids().choose(rng).expect("neutral set is non-empty")
            }
        })
        .collect()
}

pub(crate) fn neutral_words(gold: &GoldModel, rng: &mut impl Rng, len: usize) -> Vec<usize> {
    (0..len)
        .map(|_| *gold.neutral_ids().choose(rng).expect("neutral set is non-empty"))
        .collect()
}

fn make_pair(cfg: &SyntheticCorpusConfig, gold: &GoldModel, rng: &mut impl Rng, plant: bool) -> PreferenceExample {
    let qlen = cfg.question_len.sample(rng);
    let question = neutral_words(gold, rng, qlen);
    let (mut better, worse, margin) = loop {
        let mut draw = || {
            let len = cfg.response_len.sample(rng);
            let quality: f64 = rng.gen();
            sample_response(gold, rng, len, quality, cfg.feature_rate)
        };
        let (a, b) = (draw(), draw());
        let (ga, gb) = (gold.score(&a), gold.score(&b));
        if ga != gb {
            break if ga > gb { (a, b, ga - gb) } else { (b, a, gb - ga) };
        }
    };
    let flip = rng.gen::<f64>() < cfg.label_noise;
    let pad = plant && rng.gen::<f64>() < cfg.spurious_length_weight;
    let (mut chosen, rejected, margin) = if flip {
        (worse, std::mem::take(&mut better), -margin)
    } else {
        (better, worse, margin)
    };
    if pad {
        let n = cfg.spurious_pad_len.sample(rng);
        chosen.extend(neutral_words(gold, rng, n));
    }
    PreferenceExample {
        question: gold.render(&question),
        chosen: gold.render(&chosen),
        rejected: gold.render(&rejected),
        gold_margin: Some(margin),
    }
}

/// Deterministic synthetic preference corpus. The length shortcut is only
/// planted in the training split.
pub fn generate_synthetic_corpus(cfg: &SyntheticCorpusConfig) -> Result<SyntheticCorpus> {
    cfg.validate()?;
    let gold = cfg.gold_model();
    let key = RngKey::new(cfg.seed);
    let mut rng = key.derive(1).rng();
    let train = (0..cfg.num_examples).map(|_| make_pair(cfg, &gold, &mut rng, true)).collect();
    let mut rng = key.derive(2).rng();
    let test = (0..cfg.num_test).map(|_| make_pair(cfg, &gold, &mut rng, false)).collect();
    Ok(SyntheticCorpus { train, test, gold })
}

#[cfg(test)]
mod tests {
    use super::*;

    fn small(seed: u64) -> SyntheticCorpusConfig {
        SyntheticCorpusConfig {
            num_examples: 200,
            num_test: 50,
            seed,
            ..Default::default()
        }
    }

    #[test]
    fn same_seed_same_corpus() {
        let a = generate_synthetic_corpus(&small(7)).unwrap();
        let b = generate_synthetic_corpus(&small(7)).unwrap();
        assert_eq!(a.train, b.train);
        assert_eq!(a.test, b.test);
        let c = generate_synthetic_corpus(&small(8)).unwrap();
        assert_ne!(a.train, c.train);
    }

    #[test]
    fn noiseless_margins_positive() {
        let c = generate_synthetic_corpus(&small(3)).unwrap();
        for ex in c.train.iter().chain(&c.test) {
            let m = ex.gold_margin.unwrap();
            assert!(m > 0.0);
            // independent recount against the gold scorer
            let recount = c.gold.score_text(&ex.chosen) - c.gold.score_text(&ex.rejected);
            assert_eq!(recount, m);
            ex.validate().unwrap();
        }
    }

    #[test]
    fn label_noise_rate() {
        let cfg = SyntheticCorpusConfig {
            num_examples: 10_000,
            num_test: 0,
            label_noise: 0.25,
            seed: 11,
            ..Default::default()
        };
        let c = generate_synthetic_corpus(&cfg).unwrap();
        let flipped = c
            .train
            .iter()
            .filter(|ex| c.gold.score_text(&ex.chosen) < c.gold.score_text(&ex.rejected))
            .count();
        let frac = flipped as f64 / 10_000.0;
        assert!((frac - 0.25).abs() < 0.02, "{frac}");
    }

    #[test]
    fn planted_padding_lengthens_chosen() {
        let cfg = SyntheticCorpusConfig {
            num_examples: 2000,
            num_test: 2000,
            spurious_length_weight: 0.8,
            seed: 5,
            ..Default::default()
        };
        let c = generate_synthetic_corpus(&cfg).unwrap();
        let longer = |xs: &[PreferenceExample]| {
            xs.iter()
                .filter(|e| e.chosen.split_whitespace().count() > e.rejected.split_whitespace().count())
                .count() as f64
                / xs.len() as f64
        };
        assert!(longer(&c.train) > longer(&c.test) + 0.2);
    }

    #[test]
    fn invalid_config_rejected() {
        let bad = SyntheticCorpusConfig {
            label_noise: 0.5,
            ..Default::default()
        };
        assert!(generate_synthetic_corpus(&bad).is_err());
    }
}
