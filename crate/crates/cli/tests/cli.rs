use std::path::{Path, PathBuf};
use std::process::{Command, Output};

use pira_core::model::load_checkpoint;
use pira_core::{InstructionSet, RngKey};
use tempfile::TempDir;

const TINY: &str = r#"
[corpus]
vocab_size = 40
num_examples = 48
num_test = 60
good_tokens = 4
bad_tokens = 4

[model]
embed_dim = 8
num_layers = 1
num_heads = 2
head_hidden_dim = 8
mlp_hidden_dim = 16
max_seq_len = 96

[train]
epochs = 1
batch_size = 8

[eval]
repeats = 3
stability_examples = 4

[gradcheck]
samples = 60

[latency]
examples = 50
m_values = [1, 4]

[hacksim]
n_ladder = [1, 2, 4]
trials = 200
proxies = ["gold", "baseline", "thomas"]

[pair]
question = "w001 w002"
response = "w003 w004 w005"
"#;

fn pira(args: &[&str]) -> Output {
    Command::new(env!("CARGO_BIN_EXE_pira")).args(args).output().expect("binary runs")
}

fn setup() -> (TempDir, PathBuf) {
    let dir = tempfile::tempdir().unwrap();
    let cfg = dir.path().join("run.toml");
    std::fs::write(&cfg, TINY).unwrap();
    (dir, cfg)
}

fn run_ok(args: &[&str]) -> Output {
    let out = pira(args);
    assert!(
        out.status.success(),
        "pira {args:?} failed: {}",
        String::from_utf8_lossy(&out.stderr)
    );
    out
}

fn s(p: &Path) -> &str {
    p.to_str().unwrap()
}

fn read(p: impl AsRef<Path>) -> Vec<u8> {
    std::fs::read(p.as_ref()).unwrap_or_else(|e| panic!("{}: {e}", p.as_ref().display()))
}

#[test]
fn help_and_usage_errors() {
    assert_eq!(pira(&["--help"]).status.code(), Some(0));
    assert_eq!(pira(&["no-such-command"]).status.code(), Some(1));
    assert_eq!(pira(&["train", "--bogus-flag"]).status.code(), Some(1));
}

#[test]
fn missing_config_is_an_io_error() {
    let dir = tempfile::tempdir().unwrap();
    let out = pira(&["train", s(&dir.path().join("absent.toml"))]);
    assert_eq!(out.status.code(), Some(2));
}

#[test]
fn missing_checkpoint_is_an_io_error() {
    let (dir, cfg) = setup();
    let out_dir = dir.path().join("out");
    let ckpt = dir.path().join("absent.ckpt");
    let out = pira(&["eval", s(&cfg), "--out", s(&out_dir), "--checkpoint", s(&ckpt)]);
    assert_eq!(out.status.code(), Some(2));
}

#[test]
fn validation_errors_exit_1_and_name_the_field() {
    let (dir, cfg) = setup();
    let out_dir = dir.path().join("out");
    let out = pira(&["aggregate", s(&cfg), "--out", s(&out_dir), "--K", "0"]);
    assert_eq!(out.status.code(), Some(1));
    assert!(String::from_utf8_lossy(&out.stderr).contains("aggregate.K"));

    let out = pira(&["train", s(&cfg), "--out", s(&out_dir), "--delta-low", "0.5", "--delta-high", "0.2"]);
    assert_eq!(out.status.code(), Some(1));
    assert!(String::from_utf8_lossy(&out.stderr).contains("aggregate.delta"));

    let bad = dir.path().join("bad.toml");
    std::fs::write(&bad, "[train]\nepochs = 1\nlearning_rate = 3\n").unwrap();
    let out = pira(&["train", s(&bad), "--out", s(&out_dir)]);
    assert_eq!(out.status.code(), Some(1));
    assert!(String::from_utf8_lossy(&out.stderr).contains("learning_rate"));

    std::fs::write(&bad, "[train]\nbatch_size = 0\n").unwrap();
    let out = pira(&["train", s(&bad), "--out", s(&out_dir)]);
    assert_eq!(out.status.code(), Some(1));
    assert!(String::from_utf8_lossy(&out.stderr).contains("batch_size"));
}

#[test]
fn gen_data_writes_corpus_and_echo() {
    let (dir, cfg) = setup();
    let out_dir = dir.path().join("out");
    run_ok(&["gen-data", s(&cfg), "--out", s(&out_dir)]);
    let train = pira_core::data::load_preference_jsonl(out_dir.join("train.jsonl")).unwrap();
    let test = pira_core::data::load_preference_jsonl(out_dir.join("test.jsonl")).unwrap();
    assert_eq!((train.len(), test.len()), (48, 60));
    let gold: serde_json::Value = serde_json::from_slice(&read(out_dir.join("gold.json"))).unwrap();
    assert_eq!(gold["good_words"].as_array().unwrap().len(), 4);
    assert!(out_dir.join("gen-data.config.toml").exists());
}

#[test]
fn train_is_byte_identical_and_echo_round_trips() {
    let (dir, cfg) = setup();
    let a = dir.path().join("a");
    let b = dir.path().join("b");
    let c = dir.path().join("c");
    run_ok(&["train", s(&cfg), "--out", s(&a)]);
    run_ok(&["train", s(&cfg), "--out", s(&b)]);
    assert_eq!(read(a.join("model.ckpt")), read(b.join("model.ckpt")));
    assert_eq!(read(a.join("metrics.csv")), read(b.join("metrics.csv")));

    let echoed = a.join("train.config.toml");
    run_ok(&["train", s(&echoed), "--out", s(&c)]);
    assert_eq!(read(a.join("model.ckpt")), read(c.join("model.ckpt")));

    let metrics = String::from_utf8(read(a.join("metrics.csv"))).unwrap();
    assert!(metrics.starts_with("step,loss,pair_accuracy,"));
    assert_eq!(metrics.lines().count(), 1 + 6);

    // A different seed gives a different model.
    let d = dir.path().join("d");
    run_ok(&["train", s(&cfg), "--out", s(&d), "--seed", "9"]);
    assert_ne!(read(a.join("model.ckpt")), read(d.join("model.ckpt")));
}

#[test]
fn aggregate_degenerates_to_the_deterministic_reward() {
    let (dir, cfg) = setup();
    let out_dir = dir.path().join("out");
    run_ok(&["train", s(&cfg), "--out", s(&out_dir)]);
    let args = [
        "aggregate",
        s(&cfg),
        "--out",
        s(&out_dir),
        "--K",
        "1",
        "--M",
        "1",
        "--delta-low",
        "0",
        "--delta-high",
        "0",
    ];
    run_ok(&args);
    let first = read(out_dir.join("breakdown.csv"));
    run_ok(&args);
    assert_eq!(first, read(out_dir.join("breakdown.csv")));

    let text = String::from_utf8(first).unwrap();
    let last = text.lines().last().unwrap();
    let fields: Vec<&str> = last.split(',').collect();
    assert_eq!(fields[0], "final");
    let reported: f64 = fields[3].parse().unwrap();

    let model = load_checkpoint(out_dir.join("model.ckpt"), None).unwrap().model;
    let set = InstructionSet::bundled();
    let r = model
        .reward(&set, 0, "w001 w002", "w003 w004 w005", 0.0, RngKey::new(12345))
        .unwrap();
    assert_eq!(reported, r as f64);
}

#[test]
fn eval_writes_json_and_csv_reports() {
    let (dir, cfg) = setup();
    let out_dir = dir.path().join("out");
    run_ok(&["train", s(&cfg), "--out", s(&out_dir)]);
    run_ok(&["eval", s(&cfg), "--out", s(&out_dir), "--K", "2", "--M", "3"]);
    let report: serde_json::Value = serde_json::from_slice(&read(out_dir.join("report.json"))).unwrap();
    let acc = report["pair_accuracy"].as_f64().unwrap();
    assert!((0.0..=1.0).contains(&acc));
    assert_eq!(report["n_examples"].as_u64(), Some(60));
    assert!(report["reward_std"].as_f64().unwrap() >= 0.0);
    let csv = String::from_utf8(read(out_dir.join("report.csv"))).unwrap();
    assert_eq!(csv.lines().count(), 2);
}

#[test]
fn gradcheck_passes_on_a_fresh_model() {
    let (dir, cfg) = setup();
    let out_dir = dir.path().join("out");
    run_ok(&["gradcheck", s(&cfg), "--out", s(&out_dir)]);
    let report: serde_json::Value = serde_json::from_slice(&read(out_dir.join("gradcheck.json"))).unwrap();
    assert_eq!(report["passed"].as_bool(), Some(true));
    assert_eq!(report["checked"].as_u64(), Some(60));
    assert!(report["max_rel_error"].as_f64().unwrap() < 1e-3);
}

#[test]
fn hack_sim_writes_curves_deterministically() {
    let (dir, cfg) = setup();
    let a = dir.path().join("a");
    let b = dir.path().join("b");
    run_ok(&["hack-sim", s(&cfg), "--out", s(&a)]);
    run_ok(&["hack-sim", s(&cfg), "--out", s(&b)]);
    assert_eq!(read(a.join("curves.csv")), read(b.join("curves.csv")));
    let csv = String::from_utf8(read(a.join("curves.csv"))).unwrap();
    assert!(csv.starts_with("proxy,n,mean_proxy_reward,mean_gold_reward,mean_selected_length,trials,seed"));
    // Three proxies over a three-point ladder.
    assert_eq!(csv.lines().count(), 1 + 9);
    let summary: serde_json::Value = serde_json::from_slice(&read(a.join("hack_summary.json"))).unwrap();
    assert_eq!(summary.as_array().unwrap().len(), 3);
    assert!(a.join("proxy_plain_seed42.ckpt").exists());
}

#[test]
fn bench_latency_reports_each_m() {
    let (dir, cfg) = setup();
    let out_dir = dir.path().join("out");
    run_ok(&["bench-latency", s(&cfg), "--out", s(&out_dir), "--K", "1"]);
    let rows: serde_json::Value = serde_json::from_slice(&read(out_dir.join("latency.json"))).unwrap();
    let rows = rows.as_array().unwrap();
    assert_eq!(rows.len(), 2);
    assert_eq!(rows[1]["m"].as_u64(), Some(4));
    assert!(rows.iter().all(|r| r["rerun_speedup"].as_f64().unwrap() > 0.0));
}

#[test]
fn inputs_are_not_modified() {
    let (dir, cfg) = setup();
    let before = read(&cfg);
    let out_dir = dir.path().join("out");
    run_ok(&["gen-data", s(&cfg), "--out", s(&out_dir)]);
    let data_cfg = dir.path().join("data.toml");
    let train_path = out_dir.join("train.jsonl");
    let train_before = read(&train_path);
    std::fs::write(
        &data_cfg,
        format!("{TINY}\n[paths]\ntrain_data = {:?}\n", s(&train_path)),
    )
    .unwrap();
    run_ok(&["train", s(&data_cfg), "--out", s(&dir.path().join("t"))]);
    assert_eq!(read(&cfg), before);
    assert_eq!(read(&train_path), train_before);
}
