use pira_core::aggregate::{dual_aggregate, AggregationConfig};
use pira_core::data::{build_vocab, generate_synthetic_corpus, load_preference_jsonl, save_preference_jsonl};
use pira_core::eval::pairwise_accuracy;
use pira_core::model::{load_checkpoint, save_checkpoint};
use pira_core::{train, InstructionSet, ModelConfig, SyntheticCorpusConfig, TrainConfig};

fn small_model_cfg() -> ModelConfig {
    ModelConfig {
        embed_dim: 16,
        num_layers: 1,
        num_heads: 2,
        head_hidden_dim: 16,
        mlp_hidden_dim: 32,
        max_seq_len: 96,
        ..ModelConfig::default()
    }
}

#[test]
fn corpus_to_checkpoint_round_trip() {
    let dir = tempfile::tempdir().unwrap();
    let set = InstructionSet::bundled();
    let corpus = generate_synthetic_corpus(&SyntheticCorpusConfig {
        vocab_size: 48,
        num_examples: 160,
        num_test: 80,
        seed: 3,
        ..SyntheticCorpusConfig::default()
    })
    .unwrap();

    let path = dir.path().join("train.jsonl");
    save_preference_jsonl(&path, &corpus.train).unwrap();
    let loaded = load_preference_jsonl(&path).unwrap();
    assert_eq!(loaded, corpus.train);

    let vocab = build_vocab(&set, corpus.gold.content_words()).unwrap();
    let cfg = TrainConfig {
        epochs: 3,
        batch_size: 16,
        ..TrainConfig::default()
    };
    let out = train(&loaded, &set, &small_model_cfg(), vocab, &cfg).unwrap();
    assert_eq!(out.history.len(), 3 * 10);
    let first = out.history[0].loss;
    let last: f64 = out.history[20..].iter().map(|r| r.loss).sum::<f64>() / 10.0;
    assert!(last < first, "loss did not fall: {first} -> {last}");

    let ckpt = dir.path().join("model.ckpt");
    save_checkpoint(&out.model, &out.meta, &ckpt).unwrap();
    let back = load_checkpoint(&ckpt, Some(out.model.config())).unwrap();
    assert_eq!(back.meta, out.meta);

    let agg = AggregationConfig::pira().with_seed(11);
    let ex = &corpus.test[0];
    let a = dual_aggregate(&out.model, &set, &ex.question, &ex.chosen, &agg).unwrap();
    let b = dual_aggregate(&back.model, &set, &ex.question, &ex.chosen, &agg).unwrap();
    assert_eq!(a, b);

    let acc = pairwise_accuracy(&back.model, &set, &corpus.test, &AggregationConfig::single_pass()).unwrap();
    assert!(acc.accuracy > 0.6, "accuracy {}", acc.accuracy);
}

#[test]
fn aggregation_runs_one_backbone_pass_per_instruction() {
    let set = InstructionSet::bundled();
    let corpus = generate_synthetic_corpus(&SyntheticCorpusConfig {
        vocab_size: 48,
        num_examples: 4,
        num_test: 4,
        ..SyntheticCorpusConfig::default()
    })
    .unwrap();
    let vocab = build_vocab(&set, corpus.gold.content_words()).unwrap();
    let model = pira_core::RewardModel::init(small_model_cfg(), vocab, 0).unwrap();
    let ex = &corpus.test[0];
    for (k, m) in [(1, 1), (1, 12), (4, 3), (6, 12)] {
        let agg = AggregationConfig {
            k,
            m,
            ..AggregationConfig::pira()
        };
        let before = model.backbone_passes();
        let b = dual_aggregate(&model, &set, &ex.question, &ex.chosen, &agg).unwrap();
        assert_eq!(model.backbone_passes() - before, k as u64);
        assert_eq!(b.samples.len(), k);
        assert!(b.samples.iter().all(|row| row.len() == m));
    }
}
