//! `tabseq`: corpus generation, training, inference, evaluation, gradient
//! checking and GRU/LSTM benchmarking for table row/column extraction.
//!
//! Exit codes: 0 success, 1 quality gate failed, 2 invalid input,
//! 3 I/O failure.

mod cmd;
mod config;

use std::path::PathBuf;
use std::process::ExitCode;

use clap::{Args, Parser, Subcommand};

use config::RunConfig;

#[derive(Parser)]
#[command(name = "tabseq", version, about = "Row and column extraction for table images")]
struct Cli {
    #[command(subcommand)]
    command: Command,
}

/// Options shared by every subcommand.
#[derive(Args, Debug, Clone, Default)]
pub struct ConfigArgs {
    /// File of `key=value` lines (`#` starts a comment).
    #[arg(long, value_name = "FILE")]
    config: Option<PathBuf>,
    /// Overrides one config key; repeatable. Run `tabseq keys` for the list.
    #[arg(long = "set", value_name = "KEY=VALUE")]
    set: Vec<String>,
    /// Seed for every random draw.
    #[arg(long)]
    seed: Option<u64>,
}

#[derive(Subcommand)]
enum Command {
    /// Generate a synthetic table corpus (PNG + ground truth + manifest).
    Synth(cmd::synth::SynthArgs),
    /// Train a row or column model on a corpus.
    Train(cmd::train::TrainArgs),
    /// Predict separators for images with trained checkpoints.
    Infer(cmd::infer::InferArgs),
    /// Score separator files against corpus ground truth.
    Eval(cmd::eval::EvalArgs),
    /// Compare analytic and finite-difference gradients on a tiny model.
    Gradcheck(cmd::gradcheck::GradcheckArgs),
    /// Train GRU and LSTM variants on a synthetic corpus and compare them.
    Benchmark(cmd::benchmark::BenchmarkArgs),
    /// List the accepted config keys.
    Keys,
}

impl ConfigArgs {
    /// File, then `--set`, then the seed flag, then command-specific
    /// `(key, value)` flags.
    fn resolve(&self, flags: &[(&str, Option<String>)]) -> tabseq::Result<RunConfig> {
        let mut cfg = match &self.config {
            Some(path) => RunConfig::load(path)?,
            None => RunConfig::default(),
        };
        for pair in &self.set {
            cfg.assign(pair)?;
        }
        if let Some(seed) = self.seed {
            cfg.set("seed", seed.to_string())?;
        }
        for (key, value) in flags {
            if let Some(v) = value {
                cfg.set(key, v.clone())?;
            }
        }
        Ok(cfg)
    }
}

/// A command finished but its result fails the requested threshold.
#[derive(Debug)]
pub struct GateFailure(pub String);

impl std::fmt::Display for GateFailure {
    fn fmt(&self, f: &mut std::fmt::Formatter<'_>) -> std::fmt::Result {
        f.write_str(&self.0)
    }
}

impl std::error::Error for GateFailure {}

fn exit_code(err: &anyhow::Error) -> u8 {
    for cause in err.chain() {
        if cause.downcast_ref::<GateFailure>().is_some() {
            return 1;
        }
        if let Some(e) = cause.downcast_ref::<tabseq::Error>() {
            return if e.is_io() { 3 } else { 2 };
        }
        if cause.downcast_ref::<std::io::Error>().is_some() {
            return 3;
        }
    }
    2
}

fn main() -> ExitCode {
    let cli = Cli::parse();
    let result = match cli.command {
        Command::Synth(a) => cmd::synth::run(&a),
        Command::Train(a) => cmd::train::run(&a),
        Command::Infer(a) => cmd::infer::run(&a),
        Command::Eval(a) => cmd::eval::run(&a),
        Command::Gradcheck(a) => cmd::gradcheck::run(&a),
        Command::Benchmark(a) => cmd::benchmark::run(&a),
        Command::Keys => {
            for (k, d) in config::KEYS {
                println!("{k:<22}{d}");
            }
            Ok(())
        }
    };
    match result {
        Ok(()) => ExitCode::SUCCESS,
        Err(e) => {
            eprintln!("error: {e:#}");
            ExitCode::from(exit_code(&e))
        }
    }
}
