//! `relprof`: train, select, predict, evaluate and generate data for
//! relevance-filtered author profiling.
//!
//! Exit codes: 0 success, 1 usage error, 2 data error, 3 endpoint error.

mod commands;
mod config;

use std::path::PathBuf;
use std::process::ExitCode;

use clap::{Args, Parser, Subcommand};
use relprof_core::augmentation::AugmentError;
use relprof_core::cnet::LlmError;
use relprof_core::corpus::{Split, Trait};
use relprof_core::evaluation::ExperimentError;
use relprof_core::selectors::{SelectError, Strategy};
use relprof_core::trainer::TrainError;

#[derive(Parser, Debug)]
#[command(name = "relprof", version, about = "Relevance-filtered author profiling")]
struct Cli {
    /// Settings file (TOML, or JSON by extension); flags override it.
    #[arg(long, global = true)]
    config: Option<PathBuf>,
    /// Log progress (repeat for debug output).
    #[arg(short, long, global = true, action = clap::ArgAction::Count)]
    verbose: u8,
    #[command(subcommand)]
    command: Command,
}

#[derive(Subcommand, Debug)]
enum Command {
    /// Pre-train on NPMI annotations, then refine with REINFORCE; writes one checkpoint per top-N.
    Train(TrainArgs),
    /// Dump the posts each profile's selection keeps, as JSONL.
    Select(SelectArgs),
    /// Classify profiles and write one JSONL prediction per profile.
    Predict(PredictArgs),
    /// Score a strategy over several seeded runs.
    Evaluate(EvaluateArgs),
    /// Fit and score a supervised baseline.
    Baseline(BaselineArgs),
    /// Inject artificial posts into a capped subset of profiles.
    Enrich(EnrichArgs),
    /// Write a synthetic needle-in-a-haystack corpus.
    Synth(SynthArgs),
    /// Print class counts and post statistics of a corpus.
    Stats(StatsArgs),
}

#[derive(Args, Debug)]
struct CorpusArgs {
    /// Corpus file (JSONL, one profile per line).
    #[arg(long)]
    corpus: PathBuf,
    /// Target trait.
    #[arg(long = "trait")]
    target: Trait,
}

#[derive(Args, Debug, Default)]
struct EndpointArgs {
    /// `http(s)://host[:port]` or `mock:[markers=<high>,<low>]`.
    #[arg(long)]
    endpoint: Option<String>,
    #[arg(long)]
    model: Option<String>,
    /// Environment variable holding the bearer token.
    #[arg(long)]
    auth_env: Option<String>,
    /// Maximum requests in flight.
    #[arg(long)]
    parallelism: Option<usize>,
}

#[derive(Args, Debug)]
struct SelectorArgs {
    /// ALL, RND, PMI, PT or RL.
    #[arg(long, default_value = "RL")]
    strategy: Strategy,
    /// Posts kept per profile (ignored by ALL).
    #[arg(long = "topn", default_value_t = 5)]
    top_n: usize,
    /// Policy checkpoint for PT and RL.
    #[arg(long)]
    checkpoint: Option<PathBuf>,
    /// NPMI table for PMI.
    #[arg(long)]
    npmi: Option<PathBuf>,
    /// Seed for RND (the base seed for `evaluate`).
    #[arg(long, default_value_t = 0)]
    seed: u64,
}

#[derive(Args, Debug)]
struct TrainArgs {
    /// Training corpus.
    #[arg(long)]
    train: PathBuf,
    /// Validation corpus; without it a stratified share of the training corpus is held out.
    #[arg(long)]
    valid: Option<PathBuf>,
    #[arg(long = "trait")]
    target: Trait,
    /// Output directory for tables, checkpoints and the run manifest.
    #[arg(long)]
    out: PathBuf,
    #[arg(long)]
    epochs: Option<usize>,
    /// Top-N settings to validate, e.g. `5,10,20`.
    #[arg(long = "topn", value_delimiter = ',')]
    top_ns: Option<Vec<usize>>,
    /// Per-post selection penalty in the reward.
    #[arg(long)]
    lambda: Option<f64>,
    /// REINFORCE learning rate.
    #[arg(long)]
    lr: Option<f64>,
    #[arg(long)]
    pretrain_lr: Option<f64>,
    #[arg(long)]
    pretrain_epochs: Option<usize>,
    /// Hash buckets of the policy features.
    #[arg(long)]
    dims: Option<usize>,
    #[arg(long)]
    patience: Option<usize>,
    #[arg(long)]
    seed: Option<u64>,
    #[command(flatten)]
    endpoint: EndpointArgs,
}

#[derive(Args, Debug)]
struct SelectArgs {
    #[command(flatten)]
    corpus: CorpusArgs,
    #[command(flatten)]
    selector: SelectorArgs,
    /// Output file; stdout when absent.
    #[arg(long)]
    output: Option<PathBuf>,
}

#[derive(Args, Debug)]
struct PredictArgs {
    #[command(flatten)]
    corpus: CorpusArgs,
    #[command(flatten)]
    selector: SelectorArgs,
    #[command(flatten)]
    endpoint: EndpointArgs,
    /// Only this profile.
    #[arg(long)]
    profile: Option<String>,
    #[arg(long)]
    output: Option<PathBuf>,
}

#[derive(Args, Debug)]
struct EvaluateArgs {
    #[command(flatten)]
    corpus: CorpusArgs,
    #[command(flatten)]
    selector: SelectorArgs,
    #[command(flatten)]
    endpoint: EndpointArgs,
    #[arg(long)]
    runs: Option<usize>,
    /// JSON report; stdout when absent.
    #[arg(long)]
    output: Option<PathBuf>,
    /// Also append a CSV row to this file.
    #[arg(long)]
    csv: Option<PathBuf>,
    /// Include wall-clock timing (makes reports non-reproducible).
    #[arg(long)]
    timing: bool,
}

#[derive(clap::ValueEnum, Clone, Copy, Debug, PartialEq, Eq)]
enum BaselineKind {
    /// Character n-gram tf-idf with a ridge classifier.
    Ridge,
    /// Post-level classifier with a majority vote.
    Post,
}

#[derive(Args, Debug)]
struct BaselineArgs {
    #[arg(long, value_enum)]
    kind: BaselineKind,
    #[arg(long)]
    train: PathBuf,
    #[arg(long)]
    test: PathBuf,
    #[arg(long = "trait")]
    target: Trait,
    /// Ridge regularization strength.
    #[arg(long)]
    alpha: Option<f64>,
    #[arg(long)]
    runs: Option<usize>,
    #[arg(long, default_value_t = 0)]
    seed: u64,
    #[arg(long)]
    output: Option<PathBuf>,
    /// Per-profile predictions of the first run, as JSONL.
    #[arg(long)]
    predictions: Option<PathBuf>,
    #[arg(long)]
    timing: bool,
}

#[derive(Args, Debug)]
struct EnrichArgs {
    #[command(flatten)]
    corpus: CorpusArgs,
    /// Existing pool (JSONL); generated through the endpoint when absent.
    #[arg(long)]
    pool: Option<PathBuf>,
    /// Where to write the pool with used flags updated.
    #[arg(long)]
    pool_out: Option<PathBuf>,
    /// Generation requests per (level, topic) when generating a pool.
    #[arg(long, default_value_t = 1)]
    rounds: usize,
    #[arg(long)]
    cap: Option<usize>,
    #[arg(long)]
    per_profile: Option<usize>,
    #[arg(long)]
    seed: Option<u64>,
    /// Enriched corpus.
    #[arg(long)]
    out: PathBuf,
    #[command(flatten)]
    endpoint: EndpointArgs,
}

#[derive(Args, Debug)]
struct SynthArgs {
    #[arg(long)]
    out: PathBuf,
    #[arg(long = "trait")]
    target: Option<Trait>,
    #[arg(long, value_parser = parse_split)]
    split: Option<Split>,
    #[arg(long)]
    profiles_per_class: Option<usize>,
    #[arg(long)]
    posts: Option<usize>,
    #[arg(long)]
    needles: Option<usize>,
    #[arg(long)]
    distractors: Option<usize>,
    #[arg(long)]
    seed: Option<u64>,
}

#[derive(Args, Debug)]
struct StatsArgs {
    #[command(flatten)]
    corpus: CorpusArgs,
    /// Print JSON instead of a summary line.
    #[arg(long)]
    json: bool,
}

fn parse_split(s: &str) -> Result<Split, String> {
    match s.to_ascii_lowercase().as_str() {
        "train" => Ok(Split::Train),
        "valid" | "validation" => Ok(Split::Valid),
        "test" => Ok(Split::Test),
        _ => Err(format!("unknown split `{s}` (train, valid, test)")),
    }
}

/// A problem with how the command was invoked, as opposed to its inputs.
#[derive(Debug, thiserror::Error)]
#[error("{0}")]
pub struct UsageError(pub String);

fn exit_code(err: &anyhow::Error) -> u8 {
    for cause in err.chain() {
        if cause.is::<UsageError>() {
            return 1;
        }
        if cause.is::<LlmError>() {
            return 3;
        }
        if let Some(e) = cause.downcast_ref::<SelectError>() {
            return match e {
                SelectError::Llm(_) => 3,
                SelectError::MissingResource(..) | SelectError::InvalidTopN | SelectError::UnknownStrategy(_) => 1,
                SelectError::EmptyProfile(_) => 2,
            };
        }
        if let Some(e) = cause.downcast_ref::<ExperimentError<SelectError>>() {
            return match e.source {
                SelectError::Llm(_) => 3,
                _ => 2,
            };
        }
        if let Some(e) = cause.downcast_ref::<TrainError>() {
            return match e {
                TrainError::Llm(_) => 3,
                TrainError::Config(_) => 1,
                _ => 2,
            };
        }
        if let Some(AugmentError::Llm(_)) = cause.downcast_ref::<AugmentError>() {
            return 3;
        }
    }
    2
}

fn main() -> ExitCode {
    let cli = match Cli::try_parse() {
        Ok(cli) => cli,
        Err(e) => {
            let code = if e.use_stderr() { 1 } else { 0 };
            let _ = e.print();
            return ExitCode::from(code);
        }
    };
    let level = match cli.verbose {
        0 => "warn",
        1 => "info",
        _ => "debug",
    };
    env_logger::Builder::from_env(env_logger::Env::default().default_filter_or(level)).init();

    match commands::run(cli) {
        Ok(()) => ExitCode::SUCCESS,
        Err(e) => {
            eprintln!("error: {e:#}");
            ExitCode::from(exit_code(&e))
        }
    }
}
