//! `doccontrast`: run topic-model contrastive experiments from a config file.
//!
//! Exit codes: 0 success, 1 validation failure (bad config, missing or
//! stale artifacts, refused overwrite), 2 a property or check failed.

mod config;
mod report;
mod run;
mod stages;
mod svg;

use std::path::PathBuf;
use std::process::ExitCode;

use anyhow::Result;
use clap::{Parser, Subcommand};

use config::{ExperimentConfig, Precision, Stage};
use run::RunDir;

#[derive(Parser)]
#[command(name = "doccontrast", version, about = "Contrastive learning under topic models: simulate, train, embed, evaluate")]
struct Cli {
    #[command(subcommand)]
    command: Command,
}

#[derive(clap::Args)]
struct Args {
    /// Experiment config (TOML, or JSON by extension).
    #[arg(long)]
    config: PathBuf,
    /// Run directory.
    #[arg(long)]
    out: PathBuf,
    /// Overrides the config seed.
    #[arg(long)]
    seed: Option<u64>,
    /// Overwrite outputs of a previous run of this stage.
    #[arg(long)]
    force: bool,
}

#[derive(Subcommand)]
enum Command {
    /// Sample a topic model, a training corpus and a test corpus.
    Simulate(Args),
    /// Exhaustive oracle identities on a small instance.
    OracleCheck(Args),
    /// Holdout pairs and the first contrastive dataset.
    BuildData(Args),
    /// Train the contrastive learner.
    Train(Args),
    /// Landmark, tower or oracle embeddings of the test documents.
    Embed(Args),
    /// MAP recovery and linear-probe learning curves, or a whole sweep.
    Eval(Args),
    /// Measure both sides of the landmark error bound.
    VerifyBound(Args),
    /// Tables and charts over finished runs.
    Report(Args),
}

impl Command {
    fn split(self) -> (Stage, Args) {
        match self {
            Command::Simulate(a) => (Stage::Simulate, a),
            Command::OracleCheck(a) => (Stage::OracleCheck, a),
            Command::BuildData(a) => (Stage::BuildData, a),
            Command::Train(a) => (Stage::Train, a),
            Command::Embed(a) => (Stage::Embed, a),
            Command::Eval(a) => (Stage::Eval, a),
            Command::VerifyBound(a) => (Stage::VerifyBound, a),
            Command::Report(a) => (Stage::Report, a),
        }
    }
}

fn execute(stage: Stage, args: Args) -> Result<Option<String>> {
    let mut cfg = ExperimentConfig::load(&args.config)?;
    if args.seed.is_some() {
        cfg.seed = args.seed;
    }
    if stage != Stage::Report {
        cfg.validate(stage)?;
    }
    let config_dir = args.config.parent().map(PathBuf::from).unwrap_or_default();
    let mut run = RunDir::open(&args.out)?;
    let upstream = run.require_upstream(&cfg, stage)?;
    run.claim(stage, stages::outputs(stage), args.force)?;
    let failure = match cfg.precision {
        Precision::F32 => stages::execute::<f32>(stage, &cfg, &mut run, &config_dir)?,
        Precision::F64 => stages::execute::<f64>(stage, &cfg, &mut run, &config_dir)?,
    };
    run.finish(&cfg, stage, upstream)?;
    Ok(failure)
}

fn main() -> ExitCode {
    let cli = match Cli::try_parse() {
        Ok(c) => c,
        Err(e) => {
            let _ = e.print();
            return ExitCode::from(if e.use_stderr() { 1 } else { 0 });
        }
    };
    let (stage, args) = cli.command.split();
    match execute(stage, args) {
        Ok(None) => ExitCode::SUCCESS,
        Ok(Some(msg)) => {
            eprintln!("check failed: {msg}");
            ExitCode::from(2)
        }
        Err(e) => {
            eprintln!("error: {e:#}");
            ExitCode::from(1)
        }
    }
}
