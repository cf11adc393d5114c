//! Pairwise accuracy, repeated-evaluation stability, and latency.

use std::path::Path;
use std::time::Instant;

use serde::{Deserialize, Serialize};

use crate::aggregate::{backbone_rerun_aggregate, dual_aggregate, AggregationConfig};
use crate::data::{InstructionSet, PreferenceExample};
use crate::error::{Error, Result};
use crate::model::RewardModel;
use crate::rng::RngKey;

const KEY_ACCURACY: u64 = 1;
const KEY_REPEAT: u64 = 2;

/// Sample mean and standard deviation (`n - 1` denominator; 0 for a
/// single value).
pub fn mean_std(xs: &[f64]) -> (f64, f64) {
    let n = xs.len() as f64;
    let mean = xs.iter().sum::<f64>() / n;
    if xs.len() < 2 || xs.iter().all(|&x| x == xs[0]) {
        return (mean, 0.0);
    }
    let var = xs.iter().map(|x| (x - mean).powi(2)).sum::<f64>() / (n - 1.0);
    (mean, var.sqrt())
}

/// Sample standard deviation with its large-sample standard error
/// `s / sqrt(2(n - 1))`.
pub fn std_with_se(xs: &[f64]) -> (f64, f64) {
    let (_, s) = mean_std(xs);
    let n = xs.len().max(2) as f64;
    (s, s / (2.0 * (n - 1.0)).sqrt())
}

#[derive(Clone, Copy, Debug, PartialEq, Serialize, Deserialize)]
pub struct AccuracyReport {
    pub accuracy: f64,
    pub ties: usize,
    pub n: usize,
}

/// Fraction of pairs where the aggregated reward prefers `chosen`; exact
/// ties count half. Both members of a pair share one aggregation seed,
/// derived per example from `agg.base_seed`.
pub fn pairwise_accuracy(
    model: &RewardModel,
    set: &InstructionSet,
    test: &[PreferenceExample],
    agg: &AggregationConfig,
) -> Result<AccuracyReport> {
    if test.is_empty() {
        return Err(Error::Validation("empty evaluation set".into()));
    }
    agg.validate(set)?;
    let root = RngKey::new(agg.base_seed).derive(KEY_ACCURACY);
    let mut score = 0.0;
    let mut ties = 0;
    for (i, ex) in test.iter().enumerate() {
        let cfg = agg.with_seed(root.derive(i as u64).raw());
        let c = dual_aggregate(model, set, &ex.question, &ex.chosen, &cfg)?.final_reward;
        let r = dual_aggregate(model, set, &ex.question, &ex.rejected, &cfg)?.final_reward;
        if c > r {
            score += 1.0;
        } else if c == r {
            score += 0.5;
            ties += 1;
        }
    }
    Ok(AccuracyReport {
        accuracy: score / test.len() as f64,
        ties,
        n: test.len(),
    })
}

/// Final reward of one `(question, response)` under `repeats` different
/// base seeds derived from `agg.base_seed`.
pub fn repeated_rewards(
    model: &RewardModel,
    set: &InstructionSet,
    question: &str,
    response: &str,
    agg: &AggregationConfig,
    repeats: usize,
) -> Result<Vec<f64>> {
    let root = RngKey::new(agg.base_seed).derive(KEY_REPEAT);
    (0..repeats)
        .map(|r| {
            let cfg = agg.with_seed(root.derive(r as u64).raw());
            Ok(dual_aggregate(model, set, question, response, &cfg)?.final_reward)
        })
        .collect()
}

#[derive(Clone, Debug, PartialEq, Serialize, Deserialize)]
pub struct StabilityReport {
    /// Std of the chosen response's final reward, per example.
    pub per_example_std: Vec<f64>,
    pub mean_std: f64,
}

/// Repeats the aggregation of each example's chosen response under
/// `repeats` base seeds and reports the spread.
pub fn reward_stability(
    model: &RewardModel,
    set: &InstructionSet,
    examples: &[PreferenceExample],
    agg: &AggregationConfig,
    repeats: usize,
) -> Result<StabilityReport> {
    if repeats < 2 {
        return Err(Error::config("eval.repeats", "need at least 2 repeats"));
    }
    if examples.is_empty() {
        return Err(Error::Validation("empty evaluation set".into()));
    }
    let per_example_std = examples
        .iter()
        .map(|ex| Ok(mean_std(&repeated_rewards(model, set, &ex.question, &ex.chosen, agg, repeats)?).1))
        .collect::<Result<Vec<f64>>>()?;
    let mean_std = per_example_std.iter().sum::<f64>() / per_example_std.len() as f64;
    Ok(StabilityReport {
        per_example_std,
        mean_std,
    })
}

#[derive(Clone, Copy, Debug, PartialEq, Serialize, Deserialize)]
pub struct LatencyReport {
    /// Median seconds per `dual_aggregate` call at the requested config.
    pub median_secs: f64,
    /// Median at the same `K` with `M = 1, δ = 0`.
    pub reference_secs: f64,
    pub overhead_pct: f64,
    /// Median for the backbone-rerun MC reference at the requested config.
    pub rerun_secs: f64,
    /// `rerun_secs / median_secs`.
    pub rerun_speedup: f64,
}

const WARMUP_CALLS: usize = 5;
pub const MIN_LATENCY_EXAMPLES: usize = 50;

fn median(mut xs: Vec<f64>) -> f64 {
    xs.sort_by(f64::total_cmp);
    let n = xs.len();
    if n % 2 == 1 {
        xs[n / 2]
    } else {
        0.5 * (xs[n / 2 - 1] + xs[n / 2])
    }
}

/// Median seconds per call for each of `fs`. Calls are interleaved per
/// example so that background load affects every variant alike.
fn time_interleaved<const N: usize>(
    examples: &[PreferenceExample],
    fs: [&dyn Fn(&PreferenceExample) -> Result<f64>; N],
) -> Result<[f64; N]> {
    for ex in examples.iter().cycle().take(WARMUP_CALLS) {
        for f in &fs {
            std::hint::black_box(f(ex)?);
        }
    }
    let mut times: [Vec<f64>; N] = std::array::from_fn(|_| Vec::with_capacity(examples.len()));
    for ex in examples {
        for (f, t) in fs.iter().zip(times.iter_mut()) {
            let start = Instant::now();
            std::hint::black_box(f(ex)?);
            t.push(start.elapsed().as_secs_f64());
        }
    }
    Ok(times.map(median))
}

/// Wall-clock cost of aggregation relative to a single deterministic head
/// pass per instruction, and relative to rerunning the backbone.
pub fn latency_overhead(
    model: &RewardModel,
    set: &InstructionSet,
    examples: &[PreferenceExample],
    agg: &AggregationConfig,
) -> Result<LatencyReport> {
    if examples.len() < MIN_LATENCY_EXAMPLES {
        return Err(Error::config(
            "eval.examples",
            format!("latency needs at least {MIN_LATENCY_EXAMPLES} examples"),
        ));
    }
    agg.validate(set)?;
    let reference = AggregationConfig {
        m: 1,
        delta_low: 0.0,
        delta_high: 0.0,
        ..agg.clone()
    };
    let run = |cfg: &AggregationConfig, ex: &PreferenceExample| {
        Ok(dual_aggregate(model, set, &ex.question, &ex.chosen, cfg)?.final_reward)
    };
    let [reference_secs, median_secs, rerun_secs] = time_interleaved(
        examples,
        [
            &|ex| run(&reference, ex),
            &|ex| run(agg, ex),
            &|ex| backbone_rerun_aggregate(model, set, &ex.question, &ex.chosen, agg),
        ],
    )?;
    Ok(LatencyReport {
        median_secs,
        reference_secs,
        overhead_pct: 100.0 * (median_secs / reference_secs - 1.0),
        rerun_secs,
        rerun_speedup: rerun_secs / median_secs,
    })
}

#[derive(Clone, Debug, Default, PartialEq, Serialize, Deserialize)]
pub struct EvalReport {
    pub pair_accuracy: f64,
    /// Std of accuracy across checkpoints or seeds; 0 for a single one.
    pub accuracy_std: f64,
    pub reward_std: f64,
    pub latency_overhead_pct: Option<f64>,
    pub ties: usize,
    pub n_examples: usize,
}

pub fn write_report_json(path: impl AsRef<Path>, report: &EvalReport) -> Result<()> {
    let path = path.as_ref();
    let text = serde_json::to_string_pretty(report).map_err(|e| Error::Malformed {
        what: "eval report".into(),
        detail: e.to_string(),
    })?;
    std::fs::write(path, text + "\n").map_err(|e| Error::io(path, e))
}

pub fn write_report_csv(path: impl AsRef<Path>, report: &EvalReport) -> Result<()> {
    let path = path.as_ref();
    let mut w = csv::Writer::from_path(path).map_err(|e| Error::io(path, e.into()))?;
    w.serialize(report)?;
    w.flush().map_err(|e| Error::io(path, e))?;
    Ok(())
}

#[cfg(test)]
mod tests {
    use super::*;
    use crate::autodiff::Tensor;
    use crate::data::build_vocab;
    use crate::testutil::{small_config, small_model, text, words};

    fn examples(n: u64) -> Vec<PreferenceExample> {
        (0..n)
            .map(|i| {
                let k = RngKey::new(500 + i);
                PreferenceExample {
                    question: text(k, 3),
                    chosen: text(k.derive(1), 4),
                    rejected: text(k.derive(2), 6),
                    gold_margin: None,
                }
            })
            .collect()
    }

    #[test]
    fn untrained_model_ties_everywhere() {
        let set = InstructionSet::bundled();
        let m = RewardModel::init(small_config(), build_vocab(&set, &words()).unwrap(), 1).unwrap();
        let r = pairwise_accuracy(&m, &set, &examples(20), &AggregationConfig::pira()).unwrap();
        assert_eq!(r.accuracy, 0.5);
        assert_eq!(r.ties, 20);
    }

    fn scale_output(m: &RewardModel, w: f32, b: f32) -> RewardModel {
        let mut out = m.clone();
        let w2 = m.params().get("head.w2").unwrap();
        let scaled = Tensor::new(w2.shape().to_vec(), w2.data().iter().map(|x| x * w).collect()).unwrap();
        *out.params_mut().get_mut("head.w2").unwrap() = scaled;
        let b2 = m.params().get("head.b2").unwrap().item();
        *out.params_mut().get_mut("head.b2").unwrap() = Tensor::scalar(b2 * w + b);
        out
    }

    #[test]
    fn negated_head_flips_accuracy() {
        let set = InstructionSet::bundled();
        let m = small_model(2);
        let ex = examples(40);
        let agg = AggregationConfig::single_pass();
        let a = pairwise_accuracy(&m, &set, &ex, &agg).unwrap();
        let b = pairwise_accuracy(&scale_output(&m, -1.0, 0.0), &set, &ex, &agg).unwrap();
        assert!((a.accuracy + b.accuracy - 1.0).abs() < 1e-12);
        assert_eq!(a.ties, b.ties);
    }

    #[test]
    fn accuracy_invariant_to_bias_and_positive_scale() {
        let set = InstructionSet::bundled();
        let m = small_model(3);
        let ex = examples(40);
        let agg = AggregationConfig::single_pass();
        let a = pairwise_accuracy(&m, &set, &ex, &agg).unwrap();
        for (w, b) in [(1.0, 3.5), (1.0, -20.0), (2.0, 0.0), (0.5, 1.0)] {
            assert_eq!(pairwise_accuracy(&scale_output(&m, w, b), &set, &ex, &agg).unwrap(), a);
        }
    }

    #[test]
    fn zero_rate_stability_is_exactly_zero() {
        let set = InstructionSet::bundled();
        let m = small_model(4);
        let agg = AggregationConfig {
            delta_low: 0.0,
            delta_high: 0.0,
            ..AggregationConfig::pira()
        };
        let r = reward_stability(&m, &set, &examples(5), &agg, 10).unwrap();
        assert_eq!(r.mean_std, 0.0);
        assert!(r.per_example_std.iter().all(|&s| s == 0.0));
    }

    #[test]
    fn aggregation_is_more_stable_than_a_noisy_pass() {
        let set = InstructionSet::bundled();
        let m = small_model(5);
        let ex = examples(3);
        let noisy = AggregationConfig {
            k: 1,
            m: 1,
            delta_low: 0.25,
            delta_high: 0.25,
            ..Default::default()
        };
        for e in &ex {
            let (s1, se1) = std_with_se(&repeated_rewards(&m, &set, &e.question, &e.chosen, &noisy, 200).unwrap());
            let (s6, se6) =
                std_with_se(&repeated_rewards(&m, &set, &e.question, &e.chosen, &AggregationConfig::pira(), 200).unwrap());
            assert!(s6 + 2.0 * (se1 * se1 + se6 * se6).sqrt() < s1, "{s6} vs {s1}");
        }
    }

    #[test]
    fn std_scales_down_with_m() {
        let set = InstructionSet::bundled();
        let m = small_model(6);
        let cfg = |mm| AggregationConfig {
            k: 1,
            m: mm,
            ..Default::default()
        };
        let s1 = mean_std(&repeated_rewards(&m, &set, "w001", "w002 w003", &cfg(1), 300).unwrap()).1;
        let s12 = mean_std(&repeated_rewards(&m, &set, "w001", "w002 w003", &cfg(12), 300).unwrap()).1;
        assert!(s12 <= 0.40 * s1, "{s12} vs {s1}");
    }

    #[test]
    fn head_only_aggregation_beats_backbone_rerun() {
        let set = InstructionSet::bundled();
        let m = small_model(7);
        let r = latency_overhead(&m, &set, &examples(50), &AggregationConfig::pira()).unwrap();
        assert!(r.rerun_speedup >= 3.0, "{r:?}");
        assert!(r.overhead_pct > 0.0, "{r:?}");
    }

    #[test]
    fn latency_needs_enough_examples() {
        let set = InstructionSet::bundled();
        let m = small_model(8);
        assert!(matches!(
            latency_overhead(&m, &set, &examples(10), &AggregationConfig::pira()),
            Err(Error::Config { .. })
        ));
    }

    #[test]
    fn reports_serialize() {
        let dir = tempfile::tempdir().unwrap();
        let r = EvalReport {
            pair_accuracy: 0.75,
            accuracy_std: 0.01,
            reward_std: 0.2,
            latency_overhead_pct: Some(7.0),
            ties: 0,
            n_examples: 4,
        };
        write_report_json(dir.path().join("r.json"), &r).unwrap();
        let back: EvalReport =
            serde_json::from_str(&std::fs::read_to_string(dir.path().join("r.json")).unwrap()).unwrap();
        assert_eq!(back, r);
        write_report_csv(dir.path().join("r.csv"), &r).unwrap();
        let text = std::fs::read_to_string(dir.path().join("r.csv")).unwrap();
        assert_eq!(
            text.lines().next().unwrap(),
            "pair_accuracy,accuracy_std,reward_std,latency_overhead_pct,ties,n_examples"
        );
    }

    #[test]
    fn mean_std_matches_hand_values() {
        let (m, s) = mean_std(&[1.0, 2.0, 3.0, 4.0]);
        assert_eq!(m, 2.5);
        assert!((s - (5.0f64 / 3.0).sqrt()).abs() < 1e-12);
        assert_eq!(mean_std(&[3.0]), (3.0, 0.0));
    }
}
