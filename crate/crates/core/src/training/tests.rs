use proptest::prelude::*;

use super::*;
use crate::autodiff::{finite_diff_check, Tensor};
use crate::data::{build_vocab, generate_synthetic_corpus, SyntheticCorpusConfig};
use crate::model::ParamStore;

/// ln(1 + e^-x) for x ≥ 0 from power series only.
fn series_softplus_neg(x: f64) -> f64 {
    let mut e = 0.0;
    let mut term = 1.0;
    for k in 0..60 {
        if k > 0 {
            term *= -x / k as f64;
        }
        e += term;
    }
    let mut ln = 0.0;
    let mut pow = 1.0;
    for k in 1..400 {
        pow *= e;
        ln += if k % 2 == 1 { pow } else { -pow } / k as f64;
    }
    ln
}

#[test]
fn bt_loss_anchors() {
    assert!((bt_loss(0.0, 0.0) - std::f64::consts::LN_2).abs() < 1e-6);
    let hi = bt_loss(50.0, 0.0);
    assert!(hi < 1e-20 && hi.is_finite());
    let lo = bt_loss(0.0, 50.0);
    assert!((lo - 50.0).abs() < 1e-9 && lo.is_finite());
    let oracle = series_softplus_neg(1.0);
    assert!((oracle - 0.313262).abs() < 1e-5);
    assert!((bt_loss(1.0, 0.0) - oracle).abs() < 1e-12);
}

proptest! {
    #[test]
    fn bt_loss_gradient_antisymmetry(a in -20.0f64..20.0, b in -20.0f64..20.0) {
        let d = a - b;
        let h = 1e-6;
        let fd_ab = (bt_loss(a + h, b) - bt_loss(a - h, b)) / (2.0 * h);
        let fd_ba = (bt_loss(b, a + h) - bt_loss(b, a - h)) / (2.0 * h);
        let sig = 1.0 / (1.0 + (-d).exp());
        prop_assert!((fd_ab - (sig - 1.0)).abs() < 1e-6);
        prop_assert!((fd_ba - sig).abs() < 1e-6);
        prop_assert!((fd_ab + fd_ba - (2.0 * sig - 1.0)).abs() < 1e-6);
    }

    #[test]
    fn lr_schedule_is_monotone_and_bounded(total in 1usize..500, ratio in 0.0f64..0.99, base in 1e-6f64..1.0) {
        let mut prev = -1.0;
        for s in 0..=total {
            let lr = lr_at(s, total, base, ratio);
            prop_assert!(lr >= prev && lr <= base);
            prev = lr;
        }
        prop_assert_eq!(lr_at(total, total, base, ratio), base);
    }
}

#[test]
fn lr_schedule_anchors() {
    assert_eq!(lr_at(0, 1000, 1e-3, 0.05), 0.0);
    assert!((lr_at(50, 1000, 1e-3, 0.05) - 1e-3).abs() < 1e-9);
    assert!((lr_at(25, 1000, 1e-3, 0.05) - 5e-4).abs() < 1e-12);
    assert_eq!(lr_at(0, 1000, 1e-3, 0.0), 1e-3);
}

pub(crate) fn tiny_model_cfg() -> ModelConfig {
    ModelConfig {
        embed_dim: 16,
        num_layers: 1,
        num_heads: 2,
        head_hidden_dim: 16,
        mlp_hidden_dim: 32,
        max_seq_len: 96,
        ..Default::default()
    }
}

fn tiny_corpus(n: usize) -> (crate::data::SyntheticCorpus, Vocab, InstructionSet) {
    let ccfg = SyntheticCorpusConfig {
        vocab_size: 40,
        num_examples: n,
        num_test: 50,
        good_tokens: 6,
        bad_tokens: 6,
        ..Default::default()
    };
    let corpus = generate_synthetic_corpus(&ccfg).unwrap();
    let set = InstructionSet::bundled();
    let vocab = build_vocab(&set, corpus.gold.content_words()).unwrap();
    (corpus, vocab, set)
}

fn quick_cfg() -> TrainConfig {
    TrainConfig {
        batch_size: 8,
        epochs: 1,
        ..Default::default()
    }
}

#[test]
fn zero_learning_rates_leave_params_unchanged() {
    let (corpus, vocab, set) = tiny_corpus(24);
    let cfg = TrainConfig {
        lr_backbone: 0.0,
        lr_head: 0.0,
        ..quick_cfg()
    };
    let init = RewardModel::init(tiny_model_cfg(), vocab, 1).unwrap();
    let out = train_model(init.clone(), &corpus.train, &set, &cfg).unwrap();
    assert_eq!(out.model.params(), init.params());
}

fn group_unchanged(a: &RewardModel, b: &RewardModel, group: ParamGroup) -> bool {
    a.params()
        .iter()
        .filter(|(n, _)| group_of(n) == group)
        .all(|(n, t)| b.params().get(n).unwrap() == t)
}

#[test]
fn dual_rates_touch_only_their_group() {
    let (corpus, vocab, set) = tiny_corpus(24);
    let init = RewardModel::init(tiny_model_cfg(), vocab, 2).unwrap();
    let cfg = TrainConfig {
        lr_head: 0.0,
        warmup_ratio: 0.0,
        ..quick_cfg()
    };
    let out = train_model(init.clone(), &corpus.train, &set, &cfg).unwrap();
    assert!(group_unchanged(&init, &out.model, ParamGroup::Head));
    assert!(!group_unchanged(&init, &out.model, ParamGroup::Backbone));

    let cfg = TrainConfig {
        lr_backbone: 0.0,
        warmup_ratio: 0.0,
        ..quick_cfg()
    };
    let out = train_model(init.clone(), &corpus.train, &set, &cfg).unwrap();
    assert!(group_unchanged(&init, &out.model, ParamGroup::Backbone));
    assert!(!group_unchanged(&init, &out.model, ParamGroup::Head));
}

#[test]
fn same_seed_is_bitwise_deterministic() {
    let (corpus, vocab, set) = tiny_corpus(24);
    let a = train(&corpus.train, &set, &tiny_model_cfg(), vocab.clone(), &quick_cfg()).unwrap();
    let b = train(&corpus.train, &set, &tiny_model_cfg(), vocab.clone(), &quick_cfg()).unwrap();
    assert_eq!(a.model.params(), b.model.params());
    assert_eq!(a.history, b.history);
    let other = TrainConfig { seed: 43, ..quick_cfg() };
    let c = train(&corpus.train, &set, &tiny_model_cfg(), vocab, &other).unwrap();
    assert_ne!(a.model.params(), c.model.params());
}

#[test]
fn first_step_loss_is_ln2() {
    let (corpus, vocab, set) = tiny_corpus(24);
    let out = train(&corpus.train, &set, &tiny_model_cfg(), vocab, &quick_cfg()).unwrap();
    assert_eq!(out.history[0].loss, std::f64::consts::LN_2 as f32 as f64);
    assert_eq!(out.history[0].pair_accuracy, 0.5);
    assert_eq!(out.history[0].lr_head, 0.0);
    assert_eq!(out.meta.step as usize, out.history.len());
}

#[test]
fn zero_head_pair_gradient_matches_finite_differences() {
    let (corpus, vocab, set) = tiny_corpus(4);
    let model = RewardModel::init(tiny_model_cfg(), vocab, 3).unwrap();
    let cfg = model.config().clone();
    let ex = &corpus.train[0];
    let c = model.assemble(&set, 1, &ex.question, &ex.chosen).unwrap();
    let r = model.assemble(&set, 1, &ex.question, &ex.rejected).unwrap();
    let key = RngKey::new(9);
    let params: ParamStore<f64> = model.params().cast();

    let mut tape = Tape::<f64>::new();
    let bound = params.bind(&mut tape, |_| true);
    let (loss, d) = pair_loss(&mut tape, &cfg, &bound, &c, &r, 0.05, key).unwrap();
    assert_eq!(tape.value(d).item(), 0.0);
    assert_eq!(tape.value(loss).item(), std::f64::consts::LN_2);
    let grads = tape.backward(loss).unwrap();
    // the output bias cancels in the difference
    assert_eq!(grads.get(bound.var("head.b2")).unwrap().data(), &[0.0]);
    assert!(grads.get(bound.var("head.w2")).unwrap().sq_norm() > 0.0);
    // with a zero output layer nothing upstream of it moves Δ
    assert_eq!(grads.get(bound.var("head.w1")).unwrap().sq_norm(), 0.0);

    let names: Vec<&str> = params.names().collect();
    let tensors: Vec<Tensor<f64>> = names.iter().map(|n| params.get(n).unwrap().clone()).collect();
    let report = finite_diff_check(
        &tensors,
        |tape, vars| pair_loss(tape, &cfg, &bind_vars(&names, vars), &c, &r, 0.05, key).map(|(l, _)| l),
        1e-5,
        200,
        RngKey::new(1),
    )
    .unwrap();
    assert!(report.max_rel_error < 1e-3, "{report:?}");
}

fn bind_vars(names: &[&str], vars: &[Var]) -> Bound {
    Bound::from_pairs(names.iter().map(|n| n.to_string()).zip(vars.iter().copied()))
}

#[test]
fn trained_pair_gradient_matches_finite_differences() {
    let (corpus, vocab, set) = tiny_corpus(32);
    let out = train(&corpus.train, &set, &tiny_model_cfg(), vocab, &quick_cfg()).unwrap();
    let cfg = out.model.config().clone();
    let ex = &corpus.train[1];
    let c = out.model.assemble(&set, 2, &ex.question, &ex.chosen).unwrap();
    let r = out.model.assemble(&set, 2, &ex.question, &ex.rejected).unwrap();
    let params: ParamStore<f64> = out.model.params().cast();
    let names: Vec<&str> = params.names().collect();
    let tensors: Vec<Tensor<f64>> = names.iter().map(|n| params.get(n).unwrap().clone()).collect();
    let report = finite_diff_check(
        &tensors,
        |tape, vars| pair_loss(tape, &cfg, &bind_vars(&names, vars), &c, &r, 0.1, RngKey::new(4)).map(|(l, _)| l),
        1e-5,
        300,
        RngKey::new(2),
    )
    .unwrap();
    assert!(report.max_rel_error < 1e-3, "{report:?}");
}

#[test]
fn frozen_base_weights_stay_fixed_under_adapters() {
    let (corpus, vocab, set) = tiny_corpus(24);
    let mcfg = ModelConfig {
        adapter_rank: Some(2),
        adapter_alpha: Some(2.0),
        ..tiny_model_cfg()
    };
    let init = RewardModel::init(mcfg, vocab, 5).unwrap();
    let cfg = TrainConfig {
        warmup_ratio: 0.0,
        ..quick_cfg()
    };
    let out = train_model(init.clone(), &corpus.train, &set, &cfg).unwrap();
    for n in ["layer0.attn.wq", "layer0.attn.wv"] {
        assert_eq!(init.params().get(n), out.model.params().get(n));
    }
    for n in ["layer0.attn.wq.adapter_a", "layer0.attn.wq.adapter_b", "layer0.attn.wk"] {
        assert_ne!(init.params().get(n), out.model.params().get(n));
    }
}

#[test]
fn exploding_weights_report_divergence() {
    let (corpus, vocab, set) = tiny_corpus(8);
    let mut init = RewardModel::init(tiny_model_cfg(), vocab, 6).unwrap();
    *init.params_mut().get_mut("head.w2").unwrap() = Tensor::full(16, 1, 3e38);
    *init.params_mut().get_mut("head.b1").unwrap() = Tensor::full(1, 16, 10.0);
    let err = train_model(init, &corpus.train, &set, &quick_cfg()).unwrap_err();
    assert!(matches!(err, Error::Diverged { .. }), "{err}");
}

#[test]
fn invalid_configs_rejected() {
    for cfg in [
        TrainConfig { lr_head: -1.0, ..Default::default() },
        TrainConfig { batch_size: 0, ..Default::default() },
        TrainConfig { warmup_ratio: 1.0, ..Default::default() },
        TrainConfig { train_dropout: 1.0, ..Default::default() },
        TrainConfig { grad_clip: Some(0.0), ..Default::default() },
    ] {
        assert!(matches!(cfg.validate(), Err(Error::Config { .. })));
    }
    let (_, vocab, set) = tiny_corpus(4);
    let m = RewardModel::init(tiny_model_cfg(), vocab, 1).unwrap();
    assert!(matches!(train_model(m, &[], &set, &quick_cfg()), Err(Error::Validation(_))));
}

#[test]
fn fixed_sampling_keeps_instruction_per_example() {
    let (corpus, _, set) = tiny_corpus(30);
    let cfg = TrainConfig {
        instruction_sampling: InstructionSampling::Fixed,
        ..Default::default()
    };
    for ex in &corpus.train {
        let a = instruction_for(&cfg, &set, ex, RngKey::new(1));
        let b = instruction_for(&cfg, &set, ex, RngKey::new(2));
        assert_eq!(a, b);
    }
    let per = TrainConfig::default();
    let ks: std::collections::HashSet<usize> =
        (0..50).map(|i| instruction_for(&per, &set, &corpus.train[0], RngKey::new(i))).collect();
    assert!(ks.len() > 5);
}

#[test]
fn metrics_csv_has_expected_columns() {
    let dir = tempfile::tempdir().unwrap();
    let path = dir.path().join("m.csv");
    let rec = StepRecord {
        step: 0,
        loss: 0.5,
        pair_accuracy: 1.0,
        lr_backbone: 0.0,
        lr_head: 0.0,
        grad_norm_backbone: 1.0,
        grad_norm_head: 2.0,
    };
    write_metrics_csv(&path, &[rec]).unwrap();
    let text = std::fs::read_to_string(&path).unwrap();
    assert_eq!(
        text.lines().next().unwrap(),
        "step,loss,pair_accuracy,lr_backbone,lr_head,grad_norm_backbone,grad_norm_head"
    );
}
