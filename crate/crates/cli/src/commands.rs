use std::collections::BTreeSet;
use std::path::{Path, PathBuf};
use std::time::Instant;

use pira_core::aggregate::{dual_aggregate, write_breakdown_csv, AggregationConfig};
use pira_core::autodiff::Tensor;
use pira_core::data::{
    build_vocab, generate_synthetic_corpus, load_instruction_set, load_preference_jsonl, normalize_word,
    save_preference_jsonl, InstructionSet, PreferenceExample, Vocab,
};
use pira_core::eval::{
    latency_overhead, mean_std, pairwise_accuracy, reward_stability, write_report_csv, write_report_json, EvalReport,
};
use pira_core::hacksim::{hack_curve, write_curves_csv, CandidateSampler, HackCurve, Proxy, ProxyKind};
use pira_core::model::{load_checkpoint, save_checkpoint};
use pira_core::training::{check_pair_gradient, train as train_model, write_metrics_csv};
use pira_core::{Error, InputFormat, Result, RewardModel, RngKey};
use serde::Serialize;

use crate::config::RunConfig;

fn io_err(path: &Path) -> impl FnOnce(std::io::Error) -> Error + '_ {
    move |e| Error::Io {
        path: path.to_path_buf(),
        source: e,
    }
}

fn out_path(cfg: &RunConfig, name: &str) -> PathBuf {
    cfg.paths.out.join(name)
}

fn write_json(path: &Path, value: &impl Serialize) -> Result<()> {
    let text = serde_json::to_string_pretty(value).map_err(|e| Error::Malformed {
        what: path.display().to_string(),
        detail: e.to_string(),
    })?;
    std::fs::write(path, text + "\n").map_err(io_err(path))
}

/// Creates the output directory, writes `<name>.config.toml` there and
/// prints the resolved configuration.
pub fn echo_config(name: &str, cfg: &RunConfig) -> Result<()> {
    let out = &cfg.paths.out;
    std::fs::create_dir_all(out).map_err(io_err(out))?;
    let text = cfg.to_toml();
    let path = out.join(format!("{name}.config.toml"));
    std::fs::write(&path, &text).map_err(io_err(&path))?;
    println!("# resolved configuration ({})\n{text}", path.display());
    Ok(())
}

/// The instruction set, with the aggregation plan checked against it.
fn instruction_set(cfg: &RunConfig) -> Result<InstructionSet> {
    let set = match &cfg.paths.instructions {
        Some(p) => load_instruction_set(p)?,
        None => InstructionSet::bundled(),
    };
    cfg.aggregate.validate(&set)?;
    Ok(set)
}

fn corpus_words(examples: &[PreferenceExample]) -> Vec<String> {
    let mut words = BTreeSet::new();
    for ex in examples {
        for text in [&ex.question, &ex.chosen, &ex.rejected] {
            words.extend(text.split_whitespace().filter_map(normalize_word));
        }
    }
    words.into_iter().collect()
}

/// Training pairs and the vocabulary to build a model over.
fn training_data(cfg: &RunConfig, set: &InstructionSet) -> Result<(Vec<PreferenceExample>, Vocab)> {
    match &cfg.paths.train_data {
        Some(p) => {
            let examples = load_preference_jsonl(p)?;
            let vocab = build_vocab(set, &corpus_words(&examples))?;
            Ok((examples, vocab))
        }
        None => {
            let corpus = generate_synthetic_corpus(&cfg.corpus)?;
            let vocab = build_vocab(set, corpus.gold.content_words())?;
            Ok((corpus.train, vocab))
        }
    }
}

fn test_data(cfg: &RunConfig) -> Result<Vec<PreferenceExample>> {
    match &cfg.paths.test_data {
        Some(p) => load_preference_jsonl(p),
        None => Ok(generate_synthetic_corpus(&cfg.corpus)?.test),
    }
}

fn checkpoint_path(cfg: &RunConfig) -> PathBuf {
    cfg.paths.checkpoint.clone().unwrap_or_else(|| out_path(cfg, "model.ckpt"))
}

fn load_model(path: &Path) -> Result<RewardModel> {
    Ok(load_checkpoint(path, None)?.model)
}

pub fn gen_data(cfg: &RunConfig) -> Result<()> {
    let corpus = generate_synthetic_corpus(&cfg.corpus)?;
    save_preference_jsonl(out_path(cfg, "train.jsonl"), &corpus.train)?;
    save_preference_jsonl(out_path(cfg, "test.jsonl"), &corpus.test)?;
    let g = &corpus.gold;
    let names = |ids: &[usize]| ids.iter().map(|&i| g.content_words()[i].clone()).collect::<Vec<_>>();
    #[derive(Serialize)]
    struct Gold {
        good_words: Vec<String>,
        bad_words: Vec<String>,
        good_token_weight: f64,
        bad_token_penalty: f64,
    }
    write_json(
        &out_path(cfg, "gold.json"),
        &Gold {
            good_words: names(g.good_ids()),
            bad_words: names(g.bad_ids()),
            good_token_weight: g.good_weight(),
            bad_token_penalty: g.bad_penalty(),
        },
    )?;
    println!("wrote {} train and {} test pairs", corpus.train.len(), corpus.test.len());
    Ok(())
}

pub fn train(cfg: &RunConfig) -> Result<()> {
    let set = instruction_set(cfg)?;
    let (examples, vocab) = training_data(cfg, &set)?;
    let start = Instant::now();
    let out = train_model(&examples, &set, &cfg.model, vocab, &cfg.train)?;
    save_checkpoint(&out.model, &out.meta, out_path(cfg, "model.ckpt"))?;
    write_metrics_csv(out_path(cfg, "metrics.csv"), &out.history)?;
    let last = out.history.last().expect("at least one step");
    println!(
        "trained {} steps in {:.1}s; final batch loss {:.4}, accuracy {:.3}",
        out.history.len(),
        start.elapsed().as_secs_f64(),
        last.loss,
        last.pair_accuracy
    );
    Ok(())
}

pub fn eval(cfg: &RunConfig) -> Result<()> {
    let set = instruction_set(cfg)?;
    let model = load_model(&checkpoint_path(cfg))?;
    let test = test_data(cfg)?;
    let acc = pairwise_accuracy(&model, &set, &test, &cfg.aggregate)?;
    let mut accs = vec![acc.accuracy];
    for p in &cfg.eval.extra_checkpoints {
        accs.push(pairwise_accuracy(&load_model(p)?, &set, &test, &cfg.aggregate)?.accuracy);
    }
    let n_stab = cfg.eval.stability_examples.min(test.len());
    let stability = reward_stability(&model, &set, &test[..n_stab], &cfg.aggregate, cfg.eval.repeats)?;
    let latency = if cfg.eval.latency {
        Some(latency_overhead(&model, &set, &test, &cfg.aggregate)?.overhead_pct)
    } else {
        None
    };
    let report = EvalReport {
        pair_accuracy: acc.accuracy,
        accuracy_std: mean_std(&accs).1,
        reward_std: stability.mean_std,
        latency_overhead_pct: latency,
        ties: acc.ties,
        n_examples: acc.n,
    };
    write_report_json(out_path(cfg, "report.json"), &report)?;
    write_report_csv(out_path(cfg, "report.csv"), &report)?;
    println!(
        "accuracy {:.4} ({} ties of {}), reward std {:.4}",
        report.pair_accuracy, report.ties, report.n_examples, report.reward_std
    );
    Ok(())
}

pub fn aggregate(cfg: &RunConfig) -> Result<()> {
    let set = instruction_set(cfg)?;
    let model = load_model(&checkpoint_path(cfg))?;
    let b = dual_aggregate(&model, &set, &cfg.pair.question, &cfg.pair.response, &cfg.aggregate)?;
    write_breakdown_csv(out_path(cfg, "breakdown.csv"), &b)?;
    println!("R = {}", b.final_reward);
    Ok(())
}

fn proxy_model(
    cfg: &RunConfig,
    given: Option<&PathBuf>,
    format: InputFormat,
    seed: u64,
    set: &InstructionSet,
) -> Result<RewardModel> {
    if let Some(p) = given {
        return load_model(p);
    }
    let mut run = cfg.clone();
    run.corpus.seed = seed;
    run.train.seed = seed;
    run.model.input_format = format;
    let (examples, vocab) = training_data(&run, set)?;
    let out = train_model(&examples, set, &run.model, vocab, &run.train)?;
    let tag = match format {
        InputFormat::Plain => "plain",
        InputFormat::Instructed => "instructed",
    };
    save_checkpoint(&out.model, &out.meta, out_path(cfg, &format!("proxy_{tag}_seed{seed}.ckpt")))?;
    Ok(out.model)
}

#[derive(Serialize)]
struct CurveSummary {
    proxy: String,
    seed: u64,
    peak_n: usize,
    peak_gold: f64,
    end_gold: f64,
    peak_to_end_drop: f64,
}

pub fn hack_sim(cfg: &RunConfig) -> Result<()> {
    let set = instruction_set(cfg)?;
    let hs = &cfg.hacksim;
    let seeds = if hs.seeds.is_empty() { vec![cfg.train.seed] } else { hs.seeds.clone() };
    let mut curves: Vec<HackCurve> = Vec::new();
    for &seed in &seeds {
        let corpus_cfg = pira_core::SyntheticCorpusConfig {
            seed,
            ..cfg.corpus.clone()
        };
        let gold = corpus_cfg.gold_model();
        let sampler = CandidateSampler::new(gold, hs.sampler.clone())?;
        let needs = |instructed: bool| hs.proxies.iter().any(|p| *p != ProxyKind::Gold && p.instructed() == instructed);
        let plain = if needs(false) {
            Some(proxy_model(cfg, cfg.paths.baseline_checkpoint.as_ref(), InputFormat::Plain, seed, &set)?)
        } else {
            None
        };
        let instructed = if needs(true) {
            Some(proxy_model(cfg, cfg.paths.checkpoint.as_ref(), InputFormat::Instructed, seed, &set)?)
        } else {
            None
        };
        for &kind in &hs.proxies {
            let agg = kind.aggregation(&cfg.aggregate);
            let model = if kind.instructed() { instructed.as_ref() } else { plain.as_ref() };
            let proxy = match kind {
                ProxyKind::Gold => Proxy::Gold,
                _ => Proxy::Model {
                    model: model.expect("model prepared above"),
                    set: &set,
                    agg: &agg,
                },
            };
            let curve = hack_curve(kind.name(), &proxy, &sampler, &hs.n_ladder, hs.trials, seed)?;
            let peak = curve.peak();
            println!(
                "seed {seed} {:<18} gold peak {:.3} at n={}, end {:.3}",
                kind.name(),
                peak.mean_gold_reward,
                peak.n,
                curve.points.last().expect("non-empty").mean_gold_reward
            );
            curves.push(curve);
        }
    }
    write_curves_csv(out_path(cfg, "curves.csv"), &curves)?;
    let summary: Vec<CurveSummary> = curves
        .iter()
        .map(|c| CurveSummary {
            proxy: c.proxy.clone(),
            seed: c.seed,
            peak_n: c.peak().n,
            peak_gold: c.peak().mean_gold_reward,
            end_gold: c.points.last().expect("non-empty").mean_gold_reward,
            peak_to_end_drop: c.peak_to_end_drop(),
        })
        .collect();
    write_json(&out_path(cfg, "hack_summary.json"), &summary)
}

/// A fresh model with a random (rather than zero) output layer, so that
/// gradients reach every parameter.
fn fresh_model(cfg: &RunConfig, set: &InstructionSet) -> Result<(RewardModel, Vec<PreferenceExample>)> {
    let (examples, vocab) = training_data(cfg, set)?;
    let mut model = RewardModel::init(cfg.model.clone(), vocab, cfg.train.seed)?;
    let h = model.config().head_hidden_dim;
    let key = RngKey::new(cfg.train.seed).derive(0x9e);
    let scale = (3.0 / h as f64).sqrt();
    let w2 = Tensor::from_fn(h, 1, |r, _| ((key.uniform(r as u64) * 2.0 - 1.0) * scale) as f32);
    *model.params_mut().get_mut("head.w2").expect("head.w2 exists") = w2;
    Ok((model, examples))
}

pub fn gradcheck(cfg: &RunConfig) -> Result<()> {
    let gc = &cfg.gradcheck;
    let set = instruction_set(cfg)?;
    let (model, examples) = fresh_model(cfg, &set)?;
    let start = Instant::now();
    let report = check_pair_gradient(
        &model,
        &set,
        &examples[0],
        0,
        gc.backbone_dropout,
        RngKey::new(cfg.train.seed),
        gc.epsilon,
        gc.samples,
    )?;
    let passed = report.max_rel_error < gc.threshold;
    #[derive(Serialize)]
    struct Out<'a> {
        #[serde(flatten)]
        report: &'a pira_core::autodiff::GradCheckReport,
        threshold: f64,
        passed: bool,
        seconds: f64,
    }
    write_json(
        &out_path(cfg, "gradcheck.json"),
        &Out {
            report: &report,
            threshold: gc.threshold,
            passed,
            seconds: start.elapsed().as_secs_f64(),
        },
    )?;
    println!(
        "max relative error {:.3e} over {} elements (threshold {:.0e})",
        report.max_rel_error, report.checked, gc.threshold
    );
    if !passed {
        return Err(Error::Validation(format!(
            "gradient check failed: max relative error {:.3e} >= {:.0e}",
            report.max_rel_error, gc.threshold
        )));
    }
    Ok(())
}

#[derive(Serialize)]
struct LatencyRow {
    m: usize,
    median_secs: f64,
    reference_secs: f64,
    overhead_pct: f64,
    rerun_secs: f64,
    rerun_speedup: f64,
}

pub fn bench_latency(cfg: &RunConfig) -> Result<()> {
    let set = instruction_set(cfg)?;
    let model = match &cfg.paths.checkpoint {
        Some(p) => load_model(p)?,
        None => fresh_model(cfg, &set)?.0,
    };
    let test = test_data(cfg)?;
    let examples = &test[..cfg.latency.examples.min(test.len())];
    let path = out_path(cfg, "latency.csv");
    let mut w = csv::Writer::from_path(&path).map_err(|e| Error::Io {
        path: path.clone(),
        source: e.into(),
    })?;
    let mut rows = Vec::new();
    for &m in &cfg.latency.m_values {
        let agg = AggregationConfig { m, ..cfg.aggregate.clone() };
        let r = latency_overhead(&model, &set, examples, &agg)?;
        println!(
            "M={m:>3}: {:.3} ms per call, overhead {:+.1}%, {:.1}x faster than backbone rerun",
            r.median_secs * 1e3,
            r.overhead_pct,
            r.rerun_speedup
        );
        let row = LatencyRow {
            m,
            median_secs: r.median_secs,
            reference_secs: r.reference_secs,
            overhead_pct: r.overhead_pct,
            rerun_secs: r.rerun_secs,
            rerun_speedup: r.rerun_speedup,
        };
        w.serialize(&row)?;
        rows.push(row);
    }
    w.flush().map_err(io_err(&path))?;
    write_json(&out_path(cfg, "latency.json"), &rows)?;
    Ok(())
}
