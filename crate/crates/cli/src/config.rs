//! The TOML run configuration shared by every subcommand.

use std::path::{Path, PathBuf};

use pira_core::aggregate::AggregationConfig;
use pira_core::hacksim::{ProxyKind, SamplerConfig};
use pira_core::training::TrainConfig;
use pira_core::{Error, ModelConfig, Result, SyntheticCorpusConfig};
use serde::{Deserialize, Serialize};

#[derive(Clone, Debug, Default, PartialEq, Serialize, Deserialize)]
#[serde(default, deny_unknown_fields)]
pub struct RunConfig {
    pub paths: Paths,
    pub corpus: SyntheticCorpusConfig,
    pub model: ModelConfig,
    pub train: TrainConfig,
    pub aggregate: AggregationConfig,
    pub eval: EvalSection,
    pub hacksim: HackSimSection,
    pub gradcheck: GradcheckSection,
    pub latency: LatencySection,
    pub pair: PairSection,
}

#[derive(Clone, Debug, PartialEq, Serialize, Deserialize)]
#[serde(default, deny_unknown_fields)]
pub struct Paths {
    pub out: PathBuf,
    /// Instruction file; the bundled set when absent.
    pub instructions: Option<PathBuf>,
    /// Preference JSONL for training; a synthetic corpus when absent.
    pub train_data: Option<PathBuf>,
    /// Preference JSONL for evaluation; the synthetic test split when absent.
    pub test_data: Option<PathBuf>,
    /// Model read by eval, aggregate and bench-latency, and used as the
    /// instructed proxy by hack-sim.
    pub checkpoint: Option<PathBuf>,
    /// Plain-format proxy for hack-sim.
    pub baseline_checkpoint: Option<PathBuf>,
}

impl Default for Paths {
    fn default() -> Self {
        Paths {
            out: PathBuf::from("out"),
            instructions: None,
            train_data: None,
            test_data: None,
            checkpoint: None,
            baseline_checkpoint: None,
        }
    }
}

#[derive(Clone, Debug, PartialEq, Serialize, Deserialize)]
#[serde(default, deny_unknown_fields)]
pub struct EvalSection {
    /// Base seeds per example for the stability statistic.
    pub repeats: usize,
    /// Examples used for the stability statistic.
    pub stability_examples: usize,
    /// Extra checkpoints whose accuracies enter `accuracy_std`.
    pub extra_checkpoints: Vec<PathBuf>,
    pub latency: bool,
}

impl Default for EvalSection {
    fn default() -> Self {
        EvalSection {
            repeats: 20,
            stability_examples: 20,
            extra_checkpoints: Vec::new(),
            latency: false,
        }
    }
}

#[derive(Clone, Debug, PartialEq, Serialize, Deserialize)]
#[serde(default, deny_unknown_fields)]
pub struct HackSimSection {
    pub sampler: SamplerConfig,
    pub n_ladder: Vec<usize>,
    pub trials: usize,
    pub proxies: Vec<ProxyKind>,
    /// One curve per proxy per seed; the training seed when empty. Each
    /// seed also reseeds the corpus and training when proxies are trained
    /// here.
    pub seeds: Vec<u64>,
}

impl Default for HackSimSection {
    fn default() -> Self {
        HackSimSection {
            sampler: SamplerConfig::default(),
            n_ladder: vec![1, 2, 4, 8, 16, 32, 64],
            trials: 200,
            proxies: vec![ProxyKind::Baseline, ProxyKind::Pira],
            seeds: Vec::new(),
        }
    }
}

#[derive(Clone, Debug, PartialEq, Serialize, Deserialize)]
#[serde(default, deny_unknown_fields)]
pub struct GradcheckSection {
    pub epsilon: f64,
    pub samples: usize,
    pub backbone_dropout: f64,
    pub threshold: f64,
}

impl Default for GradcheckSection {
    fn default() -> Self {
        GradcheckSection {
            epsilon: 1e-3,
            samples: 200,
            backbone_dropout: 0.05,
            threshold: 1e-3,
        }
    }
}

#[derive(Clone, Debug, PartialEq, Serialize, Deserialize)]
#[serde(default, deny_unknown_fields)]
pub struct LatencySection {
    pub examples: usize,
    pub m_values: Vec<usize>,
}

impl Default for LatencySection {
    fn default() -> Self {
        LatencySection {
            examples: 50,
            m_values: vec![1, 2, 4, 8, 12],
        }
    }
}

#[derive(Clone, Debug, PartialEq, Serialize, Deserialize)]
#[serde(default, deny_unknown_fields)]
pub struct PairSection {
    pub question: String,
    pub response: String,
}

impl Default for PairSection {
    fn default() -> Self {
        PairSection {
            question: "w001 w002 w003".into(),
            response: "w004 w005 w006 w007".into(),
        }
    }
}

/// Values given on the command line; each replaces its config field.
#[derive(Clone, Debug, Default)]
pub struct Overrides {
    pub seed: Option<u64>,
    pub k: Option<usize>,
    pub m: Option<usize>,
    pub delta_low: Option<f64>,
    pub delta_high: Option<f64>,
    pub out: Option<PathBuf>,
    pub checkpoint: Option<PathBuf>,
    pub question: Option<String>,
    pub response: Option<String>,
}

impl RunConfig {
    pub fn load(path: Option<&Path>) -> Result<Self> {
        let Some(path) = path else {
            return Ok(RunConfig::default());
        };
        let text = std::fs::read_to_string(path).map_err(|e| Error::Io {
            path: path.to_path_buf(),
            source: e,
        })?;
        toml::from_str(&text).map_err(|e| Error::Malformed {
            what: format!("config {}", path.display()),
            detail: e.message().to_string() + &field_hint(&e),
        })
    }

    /// `--seed` sets the corpus, training and aggregation seeds together.
    pub fn apply(&mut self, o: &Overrides) {
        if let Some(s) = o.seed {
            self.corpus.seed = s;
            self.train.seed = s;
            self.aggregate.base_seed = s;
        }
        if let Some(k) = o.k {
            self.aggregate.k = k;
        }
        if let Some(m) = o.m {
            self.aggregate.m = m;
        }
        if let Some(d) = o.delta_low {
            self.aggregate.delta_low = d;
        }
        if let Some(d) = o.delta_high {
            self.aggregate.delta_high = d;
        }
        if let Some(p) = &o.out {
            self.paths.out = p.clone();
        }
        if let Some(p) = &o.checkpoint {
            self.paths.checkpoint = Some(p.clone());
        }
        if let Some(q) = &o.question {
            self.pair.question = q.clone();
        }
        if let Some(r) = &o.response {
            self.pair.response = r.clone();
        }
    }

    /// Checks every section that can be checked without reading files.
    pub fn validate(&self) -> Result<()> {
        self.corpus.validate()?;
        self.model.validate()?;
        self.train.validate()?;
        self.hacksim.sampler.validate()?;
        if self.eval.repeats < 2 {
            return Err(Error::Config {
                field: "eval.repeats".into(),
                reason: "need at least 2 repeats".into(),
            });
        }
        Ok(())
    }

    pub fn to_toml(&self) -> String {
        toml::to_string_pretty(self).expect("run config serializes")
    }
}

fn field_hint(e: &toml::de::Error) -> String {
    match e.span() {
        Some(span) => format!(" (at bytes {}..{})", span.start, span.end),
        None => String::new(),
    }
}
