//! `pira`: data generation, training, evaluation, aggregation, the
//! best-of-n hacking simulator, gradient checking and latency benchmarks.

mod commands;
mod config;

use std::path::PathBuf;
use std::process::ExitCode;

use clap::{Args, Parser, Subcommand};
use pira_core::Error;

use config::{Overrides, RunConfig};

#[derive(Parser)]
#[command(name = "pira", version, about = "Instruction-reformulated reward models with dual inference-time aggregation")]
struct Cli {
    #[command(subcommand)]
    command: Command,
}

#[derive(Subcommand)]
enum Command {
    /// Write a synthetic preference corpus as JSONL.
    GenData(Common),
    /// Train a reward model; writes a checkpoint and metrics CSV.
    Train(Common),
    /// Accuracy, stability and optionally latency of a checkpoint.
    Eval(Common),
    /// Full K x M reward breakdown for one question/response pair.
    Aggregate(Common),
    /// Best-of-n gold/proxy curves for each configured proxy.
    HackSim(Common),
    /// Finite-difference check of the training gradient.
    Gradcheck(Common),
    /// Aggregation latency across M against a backbone-rerun reference.
    BenchLatency(Common),
}

#[derive(Args)]
struct Common {
    /// TOML run configuration; defaults are used when omitted.
    config: Option<PathBuf>,
    #[arg(long)]
    seed: Option<u64>,
    #[arg(long = "K")]
    k: Option<usize>,
    #[arg(long = "M")]
    m: Option<usize>,
    #[arg(long)]
    delta_low: Option<f64>,
    #[arg(long)]
    delta_high: Option<f64>,
    /// Output directory.
    #[arg(long)]
    out: Option<PathBuf>,
    #[arg(long)]
    checkpoint: Option<PathBuf>,
    #[arg(long)]
    question: Option<String>,
    #[arg(long)]
    response: Option<String>,
}

impl Common {
    fn overrides(&self) -> Overrides {
        Overrides {
            seed: self.seed,
            k: self.k,
            m: self.m,
            delta_low: self.delta_low,
            delta_high: self.delta_high,
            out: self.out.clone(),
            checkpoint: self.checkpoint.clone(),
            question: self.question.clone(),
            response: self.response.clone(),
        }
    }
}

fn exit_code(e: &Error) -> u8 {
    if e.is_io() {
        2
    } else {
        1
    }
}

fn run(name: &str, common: &Common, f: fn(&RunConfig) -> pira_core::Result<()>) -> ExitCode {
    let result = RunConfig::load(common.config.as_deref()).and_then(|mut cfg| {
        cfg.apply(&common.overrides());
        cfg.validate()?;
        commands::echo_config(name, &cfg)?;
        f(&cfg)
    });
    match result {
        Ok(()) => ExitCode::SUCCESS,
        Err(e) => {
            eprintln!("error: {e}");
            ExitCode::from(exit_code(&e))
        }
    }
}

fn main() -> ExitCode {
    let cli = match Cli::try_parse() {
        Ok(c) => c,
        Err(e) => {
            let code = if e.use_stderr() { 1 } else { 0 };
            let _ = e.print();
            return ExitCode::from(code);
        }
    };
    match &cli.command {
        Command::GenData(c) => run("gen-data", c, commands::gen_data),
        Command::Train(c) => run("train", c, commands::train),
        Command::Eval(c) => run("eval", c, commands::eval),
        Command::Aggregate(c) => run("aggregate", c, commands::aggregate),
        Command::HackSim(c) => run("hack-sim", c, commands::hack_sim),
        Command::Gradcheck(c) => run("gradcheck", c, commands::gradcheck),
        Command::BenchLatency(c) => run("bench-latency", c, commands::bench_latency),
    }
}
