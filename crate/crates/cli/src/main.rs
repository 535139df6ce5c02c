mod commands;
mod config;
mod error;

use std::path::PathBuf;
use std::process::ExitCode;

use clap::{Args, Parser, Subcommand};

use crate::config::PipelineConfig;

/// Builds revert-anchored defect corpora from Git history and runs the
/// change-encoding and perturbation analyses over them.
#[derive(Debug, Parser)]
#[command(name = "jitcorpus", version, propagate_version = true)]
pub struct Cli {
    /// Pipeline configuration file (TOML); defaults apply when omitted
    #[arg(long, global = true, value_name = "FILE")]
    pub config: Option<PathBuf>,
    /// Accept inputs produced under a different configuration hash
    #[arg(long, global = true)]
    pub force: bool,
    /// Increase log verbosity (-v info, -vv debug)
    #[arg(short, long, global = true, action = clap::ArgAction::Count)]
    pub verbose: u8,
    #[command(subcommand)]
    pub command: Command,
}

#[derive(Debug, Subcommand)]
pub enum Command {
    /// Mine defective candidates (single-function commits later reverted)
    Mine(MineArgs),
    /// Sample the clean pool and screen it against later history
    Screen(ScreenArgs),
    /// Three-vote model triage of candidates
    Triage(TriageArgs),
    /// Join triage verdicts into a split corpus file
    Build(BuildArgs),
    /// Encode corpus samples under one change-encoding strategy
    Encode(EncodeArgs),
    /// Apply a perturbation to corpus or encoded records
    Perturb(PerturbArgs),
    /// Cumulative distribution of function lengths in tokens
    Lencdf(LencdfArgs),
    /// Statistical analysis of per-seed scores or predictions
    #[command(subcommand)]
    Analyze(AnalyzeCommand),
    /// Localize the modified function between two versions of a file
    Extract(ExtractArgs),
}

#[derive(Debug, Args)]
pub struct MineArgs {
    /// Repository to mine; repeatable. Overrides the repos in the config
    #[arg(long = "repo", value_name = "PATH")]
    pub repos: Vec<PathBuf>,
    /// Output candidates file
    #[arg(long, value_name = "FILE")]
    pub out: PathBuf,
    /// Ignore commits older than this Unix time
    #[arg(long, value_name = "EPOCH")]
    pub since: Option<i64>,
    /// Comma-separated source file extensions
    #[arg(long, value_name = "LIST", value_delimiter = ',')]
    pub ext: Option<Vec<String>>,
    /// Write mining counts (rejections, revert links) as JSON
    #[arg(long, value_name = "FILE")]
    pub report: Option<PathBuf>,
}

#[derive(Debug, Args)]
pub struct ScreenArgs {
    /// Repository to screen; repeatable. Overrides the repos in the config
    #[arg(long = "repo", value_name = "PATH")]
    pub repos: Vec<PathBuf>,
    /// Defective candidates file from `mine`
    #[arg(long, value_name = "FILE")]
    pub defective: PathBuf,
    /// Output screening ledger
    #[arg(long, value_name = "FILE")]
    pub out: PathBuf,
}

#[derive(Debug, Args)]
pub struct TriageArgs {
    /// Candidates file from `mine` or screening ledger from `screen`
    #[arg(long, value_name = "FILE")]
    pub bundles: PathBuf,
    /// Which candidates to triage
    #[arg(long, value_name = "defective|clean")]
    pub kind: jitcorpus::types::Label,
    /// Output verdicts file; parked candidates go to <FILE>.parked.jsonl
    #[arg(long, value_name = "FILE")]
    pub out: PathBuf,
    /// Use the offline keyword voter instead of the model endpoint
    #[arg(long)]
    pub offline_stub: bool,
    /// Vote cache directory; overrides triage.cache_dir
    #[arg(long, value_name = "DIR")]
    pub cache: Option<PathBuf>,
}

#[derive(Debug, Args)]
pub struct BuildArgs {
    /// Verdicts file for defective candidates
    #[arg(long, value_name = "FILE")]
    pub defective: PathBuf,
    /// Verdicts file for clean candidates
    #[arg(long, value_name = "FILE")]
    pub clean: PathBuf,
    /// Output corpus file
    #[arg(long, value_name = "FILE")]
    pub out: PathBuf,
    /// Split and class-weight summary (JSON)
    #[arg(long, value_name = "FILE")]
    pub summary: PathBuf,
}

#[derive(Debug, Args)]
pub struct EncodeArgs {
    /// Corpus file from `build`
    #[arg(long, value_name = "FILE")]
    pub corpus: PathBuf,
    /// after-only, after-markers, before-after, diff-tags or added-deleted
    #[arg(long, value_name = "NAME")]
    pub encoding: jitcorpus::encoder::Encoding,
    /// Token budget; defaults to tokenizer.budget
    #[arg(long, value_name = "N")]
    pub budget: Option<usize>,
    /// whitespace-punct or bpe:<merges file>; defaults to the config tokenizer
    #[arg(long, value_name = "SPEC")]
    pub tokenizer: Option<jitcorpus::encoder::TokenizerSpec>,
    /// Unchanged context lines around each diff-tags hunk
    #[arg(long, value_name = "N", default_value_t = jitcorpus::encoder::DEFAULT_CONTEXT_LINES)]
    pub context: usize,
    /// Only encode samples of this split (train, valid or test)
    #[arg(long, value_name = "SPLIT")]
    pub split: Option<String>,
    /// Output encoded file
    #[arg(long, value_name = "FILE")]
    pub out: PathBuf,
}

#[derive(Debug, Args)]
pub struct PerturbArgs {
    /// Corpus file, or encoded file (reversed-diff-tags only)
    #[arg(long = "in", value_name = "FILE")]
    pub input: PathBuf,
    /// spurious-markers, swapped-snapshots, reversed-diff-tags or swapped-blocks
    #[arg(long, value_name = "NAME")]
    pub kind: jitcorpus::perturber::PerturbationKind,
    /// train or test
    #[arg(long, value_name = "PHASE")]
    pub phase: jitcorpus::perturber::Phase,
    /// Perturbation seed; defaults to seeds.perturbation
    #[arg(long, value_name = "N")]
    pub seed: Option<u64>,
    /// Firing probability of the swaps; defaults to 0.5
    #[arg(long, value_name = "P")]
    pub probability: Option<f64>,
    /// Token budget for corpus input; defaults to tokenizer.budget
    #[arg(long, value_name = "N")]
    pub budget: Option<usize>,
    /// Tokenizer for corpus input; defaults to the config tokenizer
    #[arg(long, value_name = "SPEC")]
    pub tokenizer: Option<jitcorpus::encoder::TokenizerSpec>,
    /// Output encoded file
    #[arg(long, value_name = "FILE")]
    pub out: PathBuf,
}

#[derive(Debug, Args)]
pub struct LencdfArgs {
    /// Corpus file from `build`
    #[arg(long, value_name = "FILE")]
    pub corpus: PathBuf,
    /// whitespace-punct or bpe:<merges file>; defaults to the config tokenizer
    #[arg(long, value_name = "SPEC")]
    pub tokenizer: Option<jitcorpus::encoder::TokenizerSpec>,
    /// Report the fraction of functions longer than this
    #[arg(long, value_name = "N")]
    pub budget: Option<usize>,
    /// Write rows here instead of standard output
    #[arg(long, value_name = "FILE")]
    pub out: Option<PathBuf>,
}

#[derive(Debug, Subcommand)]
pub enum AnalyzeCommand {
    /// Per-cell means and two-way repeated-measures ANOVA
    Stage1(Stage1Args),
    /// Paired tests of original against perturbed encodings
    Stage2(Stage2Args),
    /// Confusion counts, F1 and PR-AUC of one prediction file
    Predictions(PredictionsArgs),
}

#[derive(Debug, Args)]
pub struct Stage1Args {
    /// Score rows {model, encoding, seed, metric, value}
    #[arg(long, value_name = "FILE")]
    pub scores: PathBuf,
    /// Metric to analyze; defaults to stats.metric
    #[arg(long, value_name = "NAME")]
    pub metric: Option<String>,
    /// Add Greenhouse-Geisser corrected p-values
    #[arg(long)]
    pub greenhouse_geisser: bool,
    /// Also write the report as JSON rows
    #[arg(long, value_name = "FILE")]
    pub json: Option<PathBuf>,
}

#[derive(Debug, Args)]
pub struct Stage2Args {
    /// Score rows {model, encoding, seed, metric, value}
    #[arg(long, value_name = "FILE")]
    pub scores: PathBuf,
    /// Comma-separated original:perturbed encoding pairs
    #[arg(long, value_name = "SPEC")]
    pub pairs: String,
    /// Restrict to one model
    #[arg(long, value_name = "NAME")]
    pub model: Option<String>,
    /// Metric to analyze; defaults to stats.metric
    #[arg(long, value_name = "NAME")]
    pub metric: Option<String>,
    /// Bootstrap resamples; defaults to stats.resamples
    #[arg(long, value_name = "N")]
    pub resamples: Option<usize>,
    /// Bootstrap seed; defaults to seeds.bootstrap
    #[arg(long, value_name = "N")]
    pub seed: Option<u64>,
    /// Also write the report as JSON rows
    #[arg(long, value_name = "FILE")]
    pub json: Option<PathBuf>,
}

#[derive(Debug, Args)]
pub struct PredictionsArgs {
    /// Prediction rows {sample_id, score, label}
    #[arg(long, value_name = "FILE")]
    pub preds: PathBuf,
    /// Scores at or above this are predicted defective
    #[arg(long, value_name = "T", default_value_t = 0.5)]
    pub threshold: f64,
    /// Also write the report as JSON
    #[arg(long, value_name = "FILE")]
    pub json: Option<PathBuf>,
}

#[derive(Debug, Args)]
pub struct ExtractArgs {
    /// File before the change
    #[arg(long, value_name = "FILE")]
    pub before: PathBuf,
    /// File after the change
    #[arg(long, value_name = "FILE")]
    pub after: PathBuf,
}

fn main() -> ExitCode {
    let cli = match Cli::try_parse() {
        Ok(c) => c,
        Err(e) => {
            let _ = e.print();
            return ExitCode::from(if e.use_stderr() { 2 } else { 0 });
        }
    };
    let level = match cli.verbose {
        0 => "warn",
        1 => "info",
        _ => "debug",
    };
    env_logger::Builder::from_env(env_logger::Env::default().default_filter_or(level))
        .format_timestamp(None)
        .init();

    let result = PipelineConfig::load(cli.config.as_deref()).and_then(|cfg| commands::run(&cli, &cfg));
    match result {
        Ok(()) => ExitCode::SUCCESS,
        Err(e) => {
            eprintln!("jitcorpus: {e}");
            ExitCode::from(e.exit_code() as u8)
        }
    }
}
