mod ensemble;
mod evaluate;
mod paths;
mod predict;
mod prepare;
mod train;

use std::path::PathBuf;
use std::process::ExitCode;

use clap::{Parser, Subcommand};

/// Rumor stance and veracity classification over conversation threads.
#[derive(Debug, Parser)]
#[command(name = "rumorstance", version, about)]
struct Cli {
    /// More log output (-v info, -vv debug). Logs go to stderr.
    #[arg(short, long, action = clap::ArgAction::Count, global = true)]
    verbose: u8,

    #[command(subcommand)]
    command: Command,
}

#[derive(Debug, Subcommand)]
enum Command {
    /// Ingest a RumorEval directory (or build a synthetic corpus) into one
    /// canonical corpus file plus its vocabulary and an ingest report.
    Prepare(prepare::PrepareArgs),
    /// Write bundled lexicons and synthetic word vectors for a corpus.
    FixtureResources(prepare::ResourcesArgs),
    /// Compute the 441-dimension feature matrix of every post.
    Features(prepare::FeaturesArgs),
    /// Train one or more runs and collect their checkpoints into a pool.
    Train(train::TrainArgs),
    /// Select a greedy ensemble from a checkpoint pool.
    Ensemble(ensemble::EnsembleArgs),
    /// Write per-post stance and per-thread veracity predictions.
    Predict(predict::PredictArgs),
    /// Score a predictions file against gold labels.
    Evaluate(evaluate::EvaluateArgs),
}

/// A failure caused by the caller's inputs; exits with status 2.
#[derive(Debug)]
pub struct UsageError(pub String);

impl std::fmt::Display for UsageError {
    fn fmt(&self, f: &mut std::fmt::Formatter<'_>) -> std::fmt::Result {
        f.write_str(&self.0)
    }
}

impl std::error::Error for UsageError {}

pub fn usage(msg: impl Into<String>) -> anyhow::Error {
    UsageError(msg.into()).into()
}

fn exit_code(err: &anyhow::Error) -> u8 {
    for cause in err.chain() {
        if cause.is::<UsageError>() {
            return 2;
        }
        if let Some(e) = cause.downcast_ref::<rumorstance_core::Error>() {
            return if e.is_user_error() { 2 } else { 1 };
        }
        if cause.is::<serde_json::Error>() {
            return 2;
        }
        if let Some(e) = cause.downcast_ref::<std::io::Error>() {
            return if e.kind() == std::io::ErrorKind::NotFound { 2 } else { 1 };
        }
    }
    1
}

fn run(cli: Cli) -> anyhow::Result<()> {
    match cli.command {
        Command::Prepare(a) => prepare::prepare(a),
        Command::FixtureResources(a) => prepare::fixture_resources(a),
        Command::Features(a) => prepare::features(a),
        Command::Train(a) => train::train(a),
        Command::Ensemble(a) => ensemble::ensemble(a),
        Command::Predict(a) => predict::predict(a),
        Command::Evaluate(a) => evaluate::evaluate(a),
    }
}

fn main() -> ExitCode {
    let cli = Cli::parse();
    let level = match cli.verbose {
        0 => "warn",
        1 => "info",
        _ => "debug",
    };
    env_logger::Builder::from_env(env_logger::Env::default().default_filter_or(level)).format_timestamp(None).init();
    match run(cli) {
        Ok(()) => ExitCode::SUCCESS,
        Err(e) => {
            eprintln!("error: {e:#}");
            ExitCode::from(exit_code(&e))
        }
    }
}

/// Shared `--data` argument resolution.
pub fn vocab_path_for(data: &std::path::Path, explicit: Option<&PathBuf>) -> PathBuf {
    explicit.cloned().unwrap_or_else(|| paths::vocab_path(data))
}
