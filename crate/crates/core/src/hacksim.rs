//! Best-of-n overoptimization testbed. Candidates are scored by a proxy
//! reward (a trained model under some aggregation, or the gold scorer
//! itself) and the winner is judged by the gold scorer.

use std::collections::HashMap;
use std::path::Path;

use rand::Rng;
use serde::{Deserialize, Serialize};

use crate::aggregate::{dual_aggregate, AggregationConfig};
use crate::data::{neutral_words, sample_response, InstructionSet, LenRange};
use crate::error::{Error, Result};
use crate::model::RewardModel;
use crate::rng::RngKey;

/// Synthetic ground-truth scorer: good words add, bad words subtract.
/// Response length never enters the score.
#[derive(Clone, Debug, PartialEq)]
pub struct GoldModel {
    content: Vec<String>,
    index: HashMap<String, usize>,
    good: Vec<usize>,
    bad: Vec<usize>,
    neutral: Vec<usize>,
    role: Vec<i8>,
    good_weight: f64,
    bad_penalty: f64,
}

impl GoldModel {
    pub fn new(content: Vec<String>, good: Vec<usize>, bad: Vec<usize>, good_weight: f64, bad_penalty: f64) -> Self {
        let mut role = vec![0i8; content.len()];
        good.iter().for_each(|&g| role[g] = 1);
        bad.iter().for_each(|&b| role[b] = -1);
        let neutral = (0..content.len()).filter(|&i| role[i] == 0).collect();
        let index = content.iter().enumerate().map(|(i, w)| (w.clone(), i)).collect();
        GoldModel {
            content,
            index,
            good,
            bad,
            neutral,
            role,
            good_weight,
            bad_penalty,
        }
    }

    pub fn content_words(&self) -> &[String] {
        &self.content
    }

    pub fn good_ids(&self) -> &[usize] {
        &self.good
    }

    pub fn bad_ids(&self) -> &[usize] {
        &self.bad
    }

    pub fn neutral_ids(&self) -> &[usize] {
        &self.neutral
    }

    pub fn good_weight(&self) -> f64 {
        self.good_weight
    }

    pub fn bad_penalty(&self) -> f64 {
        self.bad_penalty
    }

    /// Gold score of a response given as content-word ids.
    pub fn score(&self, response: &[usize]) -> f64 {
        let (mut good, mut bad) = (0usize, 0usize);
        for &w in response {
            match self.role.get(w) {
                Some(1) => good += 1,
                Some(-1) => bad += 1,
                _ => {}
            }
        }
        self.good_weight * good as f64 - self.bad_penalty * bad as f64
    }

    /// Gold score of rendered text; unknown words are neutral.
    pub fn score_text(&self, text: &str) -> f64 {
        self.score(&self.parse(text))
    }

    pub fn parse(&self, text: &str) -> Vec<usize> {
        text.split_whitespace()
            .map(|w| self.index.get(w).copied().unwrap_or(usize::MAX))
            .collect()
    }

    pub fn render(&self, ids: &[usize]) -> String {
        ids.iter().map(|&i| self.content[i].as_str()).collect::<Vec<_>>().join(" ")
    }
}

/// Gold score of a response given as content-word ids.
pub fn gold_score(gold: &GoldModel, response: &[usize]) -> f64 {
    gold.score(response)
}

#[derive(Clone, Debug, PartialEq, Serialize, Deserialize)]
#[serde(default, deny_unknown_fields)]
pub struct SamplerConfig {
    pub question_len: LenRange,
    pub response_len: LenRange,
    pub feature_rate: f64,
    /// Probability that a candidate comes from the verbose tail: low
    /// quality, padded with neutral filler.
    pub verbose_prob: f64,
    /// Verbose candidates draw quality from `U[0, verbose_quality_max]`.
    pub verbose_quality_max: f64,
    pub verbose_pad: LenRange,
}

impl Default for SamplerConfig {
    fn default() -> Self {
        SamplerConfig {
            question_len: LenRange::new(3, 6),
            response_len: LenRange::new(4, 14),
            feature_rate: 0.5,
            verbose_prob: 0.05,
            verbose_quality_max: 0.3,
            verbose_pad: LenRange::new(8, 20),
        }
    }
}

impl SamplerConfig {
    pub fn validate(&self) -> Result<()> {
        for (f, r) in [
            ("sampler.question_len", self.question_len),
            ("sampler.response_len", self.response_len),
            ("sampler.verbose_pad", self.verbose_pad),
        ] {
            if r.min == 0 || r.max < r.min {
                return Err(Error::config(f, format!("need 1 <= min <= max, got {r:?}")));
            }
        }
        for (f, p) in [
            ("sampler.feature_rate", self.feature_rate),
            ("sampler.verbose_prob", self.verbose_prob),
            ("sampler.verbose_quality_max", self.verbose_quality_max),
        ] {
            if !(0.0..=1.0).contains(&p) {
                return Err(Error::config(f, "must lie in [0, 1]"));
            }
        }
        Ok(())
    }
}

/// Stand-in for a policy's response distribution. Each candidate is a
/// pure function of `(seed, trial, index)`.
#[derive(Clone, Debug)]
pub struct CandidateSampler {
    gold: GoldModel,
    cfg: SamplerConfig,
}

const KEY_QUESTION: u64 = 1;
const KEY_CANDIDATE: u64 = 2;
const KEY_PROXY: u64 = 3;

impl CandidateSampler {
    pub fn new(gold: GoldModel, cfg: SamplerConfig) -> Result<Self> {
        cfg.validate()?;
        Ok(CandidateSampler { gold, cfg })
    }

    pub fn gold(&self) -> &GoldModel {
        &self.gold
    }

    pub fn config(&self) -> &SamplerConfig {
        &self.cfg
    }

    pub fn question(&self, seed: u64, trial: usize) -> Vec<usize> {
        let mut rng = RngKey::new(seed).derive_path(&[KEY_QUESTION, trial as u64]).rng();
        let len = self.cfg.question_len.sample(&mut rng);
        neutral_words(&self.gold, &mut rng, len)
    }

    pub fn candidate(&self, seed: u64, trial: usize, index: usize) -> Vec<usize> {
        let mut rng = RngKey::new(seed)
            .derive_path(&[KEY_CANDIDATE, trial as u64, index as u64])
            .rng();
        let len = self.cfg.response_len.sample(&mut rng);
        if rng.gen::<f64>() < self.cfg.verbose_prob {
            let quality = rng.gen::<f64>() * self.cfg.verbose_quality_max;
            let mut out = sample_response(&self.gold, &mut rng, len, quality, self.cfg.feature_rate);
            let pad = self.cfg.verbose_pad.sample(&mut rng);
            out.extend(neutral_words(&self.gold, &mut rng, pad));
            out
        } else {
            let quality: f64 = rng.gen();
            sample_response(&self.gold, &mut rng, len, quality, self.cfg.feature_rate)
        }
    }
}

/// What scores candidates during selection.
#[derive(Clone, Copy, Debug)]
pub enum Proxy<'a> {
    /// The gold scorer itself; selection under it cannot hack.
    Gold,
    /// A reward model under an aggregation plan. The plan's `base_seed`
    /// is replaced per candidate.
    Model {
        model: &'a RewardModel,
        set: &'a InstructionSet,
        agg: &'a AggregationConfig,
    },
}

impl Proxy<'_> {
    fn score(&self, gold: &GoldModel, question: &[usize], response: &[usize], key: RngKey) -> Result<f64> {
        match *self {
            Proxy::Gold => Ok(gold.score(response)),
            Proxy::Model { model, set, agg } => {
                let cfg = agg.with_seed(key.raw());
                Ok(dual_aggregate(model, set, &gold.render(question), &gold.render(response), &cfg)?.final_reward)
            }
        }
    }
}

#[derive(Clone, Debug, PartialEq)]
pub struct Selection {
    pub index: usize,
    pub response: Vec<usize>,
    /// Proxy score of every candidate, in sampling order.
    pub scores: Vec<f64>,
}

fn argmax(scores: &[f64]) -> usize {
    // strict comparison keeps the lowest index on ties
    let mut best = 0;
    for (i, &s) in scores.iter().enumerate().skip(1) {
        if s > scores[best] {
            best = i;
        }
    }
    best
}

fn score_pool(proxy: &Proxy, sampler: &CandidateSampler, question: &[usize], pool: &[Vec<usize>], seed: u64, trial: usize) -> Result<Vec<f64>> {
    pool.iter()
        .enumerate()
        .map(|(i, c)| {
            let key = RngKey::new(seed).derive_path(&[KEY_PROXY, trial as u64, i as u64]);
            proxy.score(sampler.gold(), question, c, key)
        })
        .collect()
}

/// Samples `n` candidates for `trial` and returns the proxy's favourite.
/// Ties go to the lowest index.
pub fn best_of_n(proxy: &Proxy, sampler: &CandidateSampler, trial: usize, n: usize, seed: u64) -> Result<Selection> {
    if n == 0 {
        return Err(Error::config("hacksim.n", "must be at least 1"));
    }
    let question = sampler.question(seed, trial);
    let pool: Vec<Vec<usize>> = (0..n).map(|i| sampler.candidate(seed, trial, i)).collect();
    let scores = score_pool(proxy, sampler, &question, &pool, seed, trial)?;
    let index = argmax(&scores);
    Ok(Selection {
        index,
        response: pool[index].clone(),
        scores,
    })
}

#[derive(Clone, Copy, Debug, PartialEq, Serialize, Deserialize)]
pub struct HackPoint {
    pub n: usize,
    pub mean_proxy_reward: f64,
    pub mean_gold_reward: f64,
    pub mean_selected_length: f64,
    /// Standard error of `mean_gold_reward` across trials.
    pub gold_std_error: f64,
}

#[derive(Clone, Debug, PartialEq, Serialize, Deserialize)]
pub struct HackCurve {
    pub proxy: String,
    pub trials: usize,
    pub seed: u64,
    pub points: Vec<HackPoint>,
}

impl HackCurve {
    /// Point with the highest mean gold reward (earliest on ties).
    pub fn peak(&self) -> &HackPoint {
        let golds: Vec<f64> = self.points.iter().map(|p| p.mean_gold_reward).collect();
        &self.points[argmax(&golds)]
    }

    /// Gold-reward drop from the peak to the largest `n`; zero when the
    /// curve peaks at the end.
    pub fn peak_to_end_drop(&self) -> f64 {
        self.peak().mean_gold_reward - self.points.last().expect("curve has points").mean_gold_reward
    }
}

/// Named proxy recipes: which checkpoint they read and how they
/// aggregate.
#[derive(Clone, Copy, Debug, PartialEq, Eq, Serialize, Deserialize)]
#[serde(rename_all = "snake_case")]
pub enum ProxyKind {
    Gold,
    /// Plain-format model, one deterministic pass.
    Baseline,
    /// Plain-format model, head-only dropout at 0.25, 4 passes.
    Thomas,
    /// Instructed model on one instruction, head-only dropout at 0.25,
    /// 4 passes.
    ThomasInstructed,
    /// Instructed model under the run's aggregation plan.
    Pira,
}

impl ProxyKind {
    pub fn name(self) -> &'static str {
        match self {
            ProxyKind::Gold => "gold",
            ProxyKind::Baseline => "baseline",
            ProxyKind::Thomas => "thomas",
            ProxyKind::ThomasInstructed => "thomas_instructed",
            ProxyKind::Pira => "pira",
        }
    }

    /// Whether the proxy reads the instructed checkpoint.
    pub fn instructed(self) -> bool {
        matches!(self, ProxyKind::ThomasInstructed | ProxyKind::Pira)
    }

    /// Aggregation plan; `pira` is used for [`ProxyKind::Pira`].
    pub fn aggregation(self, pira: &AggregationConfig) -> AggregationConfig {
        match self {
            ProxyKind::Gold | ProxyKind::Baseline => AggregationConfig::single_pass(),
            ProxyKind::Thomas | ProxyKind::ThomasInstructed => AggregationConfig::thomas(),
            ProxyKind::Pira => pira.clone(),
        }
    }
}

pub const MIN_TRIALS: usize = 200;

/// Best-of-n selection at every `n` in `ladder`, averaged over `trials`.
///
/// Each trial samples one pool of `max(ladder)` candidates and best-of-n
/// uses its first `n`, so the candidate sets are nested across `n` and
/// identical across proxies run with the same `seed`.
pub fn hack_curve(
    name: &str,
    proxy: &Proxy,
    sampler: &CandidateSampler,
    ladder: &[usize],
    trials: usize,
    seed: u64,
) -> Result<HackCurve> {
    if ladder.is_empty() || ladder[0] == 0 || ladder.windows(2).any(|w| w[0] >= w[1]) {
        return Err(Error::config("hacksim.n_ladder", "must be a non-empty strictly ascending list of positive sizes"));
    }
    if trials < MIN_TRIALS {
        return Err(Error::config("hacksim.trials", format!("need at least {MIN_TRIALS} trials")));
    }
    let n_max = *ladder.last().expect("non-empty");
    let mut proxy_sum = vec![0.0; ladder.len()];
    let mut len_sum = vec![0.0; ladder.len()];
    let mut golds = vec![Vec::with_capacity(trials); ladder.len()];
    for trial in 0..trials {
        let question = sampler.question(seed, trial);
        let pool: Vec<Vec<usize>> = (0..n_max).map(|i| sampler.candidate(seed, trial, i)).collect();
        let scores = score_pool(proxy, sampler, &question, &pool, seed, trial)?;
        for (j, &n) in ladder.iter().enumerate() {
            let w = argmax(&scores[..n]);
            proxy_sum[j] += scores[w];
            len_sum[j] += pool[w].len() as f64;
            golds[j].push(sampler.gold().score(&pool[w]));
        }
    }
    let t = trials as f64;
    let points = ladder
        .iter()
        .enumerate()
        .map(|(j, &n)| {
            let (mean, sd) = crate::eval::mean_std(&golds[j]);
            HackPoint {
                n,
                mean_proxy_reward: proxy_sum[j] / t,
                mean_gold_reward: mean,
                mean_selected_length: len_sum[j] / t,
                gold_std_error: sd / t.sqrt(),
            }
        })
        .collect();
    Ok(HackCurve {
        proxy: name.to_string(),
        trials,
        seed,
        points,
    })
}

#[derive(Serialize)]
struct CurveRow<'a> {
    proxy: &'a str,
    n: usize,
    mean_proxy_reward: f64,
    mean_gold_reward: f64,
    mean_selected_length: f64,
    trials: usize,
    seed: u64,
}

/// One row per `(proxy, n)`.
pub fn write_curves_csv(path: impl AsRef<Path>, curves: &[HackCurve]) -> Result<()> {
    let path = path.as_ref();
    let mut w = csv::Writer::from_path(path).map_err(|e| Error::io(path, e.into()))?;
    for c in curves {
        for p in &c.points {
            w.serialize(CurveRow {
                proxy: &c.proxy,
                n: p.n,
                mean_proxy_reward: p.mean_proxy_reward,
                mean_gold_reward: p.mean_gold_reward,
                mean_selected_length: p.mean_selected_length,
                trials: c.trials,
                seed: c.seed,
            })?;
        }
    }
    w.flush().map_err(|e| Error::io(path, e))?;
    Ok(())
}
