//! `shadowmarket` command-line tool.

mod commands;
mod output;

use std::path::{Path, PathBuf};
use std::process::ExitCode;

use clap::{Args, Parser, Subcommand};
use serde::Serialize;

use shadowmarket::detection::SetMask;
use shadowmarket::Error;

use output::Format;

#[derive(Debug, Parser, Serialize)]
#[command(name = "shadowmarket", version, about = "Follower-market analytics and suspicious-follow detection")]
pub struct Cli {
    /// Worker threads for feature extraction and protocol runs (default: all cores).
    #[arg(long, global = true, value_name = "N")]
    pub jobs: Option<usize>,
    /// Table output format.
    #[arg(long, global = true, value_enum, default_value = "csv")]
    pub format: Format,
    #[command(subcommand)]
    pub command: Command,
}

#[derive(Debug, Subcommand, Serialize)]
#[serde(tag = "command", rename_all = "lowercase")]
pub enum Command {
    /// Parse a dataset directory and report every validation issue.
    Validate(ValidateArgs),
    /// Generate a synthetic market dataset with ground truth.
    Simulate(SimulateArgs),
    /// Merchant quality of service and its per-scheme distribution.
    Qos(DataOut),
    /// Merchant popularity, leaders and the QoS/popularity relation.
    Popularity(PopularityArgs),
    /// Hourly follower counts and dips of tracked accounts.
    Retention(RetentionArgs),
    /// Customer reputation, blacklisted URLs, bio terms and subscriptions.
    Customers(CustomersArgs),
    /// Behavioural metrics of labeled accounts and population summaries.
    Metrics(DataOut),
    /// The 18-feature table of labeled accounts.
    Features(FeaturesArgs),
    /// Run the undersampling / CV / ablation protocol and fit a final model.
    Train(TrainArgs),
    /// Score a labeled dataset with a saved model.
    Evaluate(EvaluateArgs),
    /// Permutation importance of every feature in the largest mask.
    Importance(TrainArgs),
    /// Every market analysis plus training and importance in one run.
    Report(TrainArgs),
}

#[derive(Debug, Args, Serialize)]
pub struct DataOut {
    /// Dataset directory.
    #[arg(long, value_name = "DIR")]
    pub data: PathBuf,
    /// Output directory.
    #[arg(long, value_name = "DIR")]
    pub out: PathBuf,
}

#[derive(Debug, Args, Serialize)]
pub struct ValidateArgs {
    /// Dataset directory (same as --data).
    #[arg(value_name = "DIR", conflicts_with = "data", required_unless_present = "data")]
    pub dir: Option<PathBuf>,
    #[arg(long, value_name = "DIR")]
    pub data: Option<PathBuf>,
    /// Also write validation.json and a run manifest here.
    #[arg(long, value_name = "DIR")]
    pub out: Option<PathBuf>,
}

#[derive(Debug, Args, Serialize)]
pub struct SimulateArgs {
    /// Generator config; the bare name paper_calibrated.json selects the shipped preset.
    #[arg(long, value_name = "FILE")]
    pub config: Option<PathBuf>,
    /// Overrides the config seed.
    #[arg(long, value_name = "U64")]
    pub seed: Option<u64>,
    #[arg(long, value_name = "DIR")]
    pub out: PathBuf,
    /// Flip this fraction of labels after generation.
    #[arg(long, value_name = "RATE")]
    pub flip_rate: Option<f64>,
}

#[derive(Debug, Args, Serialize)]
pub struct LeaderArgs {
    /// Take the K most popular merchants as leaders.
    #[arg(long, value_name = "K", conflicts_with = "leader_threshold")]
    pub top_k: Option<usize>,
    /// Leaders are merchants with popularity above this value.
    #[arg(long, value_name = "T", default_value_t = 0.71)]
    pub leader_threshold: f64,
}

#[derive(Debug, Args, Serialize)]
pub struct PopularityArgs {
    #[command(flatten)]
    pub io: DataOut,
    #[command(flatten)]
    pub leaders: LeaderArgs,
}

#[derive(Debug, Args, Serialize)]
pub struct RetentionArgs {
    #[command(flatten)]
    pub io: DataOut,
    /// Accounts to report (default: every customer with at least 24 snapshots).
    #[arg(long = "account", value_name = "ID")]
    pub accounts: Vec<String>,
}

#[derive(Debug, Args, Serialize)]
pub struct CustomersArgs {
    #[command(flatten)]
    pub io: DataOut,
    #[command(flatten)]
    pub leaders: LeaderArgs,
    /// Reputation threshold for the above-threshold fraction.
    #[arg(long, value_name = "SCORE", default_value_t = shadowmarket::market::DEFAULT_REPUTATION_THRESHOLD)]
    pub reputation_threshold: f64,
    /// Fill missing reputation scores with the follower/listed proxy (not a Klout score).
    #[arg(long)]
    pub reputation_proxy: bool,
}

#[derive(Debug, Args, Serialize)]
pub struct FeaturesArgs {
    #[command(flatten)]
    pub io: DataOut,
    /// Feature sets to emit.
    #[arg(long, value_name = "SETS", default_value = "ABCD")]
    pub sets: SetMask,
}

#[derive(Debug, Args, Serialize)]
pub struct TrainArgs {
    #[command(flatten)]
    pub io: DataOut,
    /// Largest feature-set mask; the ablation schedule grows up to it (A, AB, ...).
    #[arg(long, value_name = "SETS", default_value = "ABCD")]
    pub sets: SetMask,
    #[arg(long, value_name = "U64", default_value_t = 0)]
    pub seed: u64,
    /// SVM box constraint.
    #[arg(long, value_name = "C", default_value_t = 1000.0)]
    pub c: f64,
    /// RBF gamma in exp(-gamma * ||x - y||^2).
    #[arg(long, value_name = "GAMMA", default_value_t = shadowmarket::detection::svm::DEFAULT_GAMMA)]
    pub gamma: f64,
    /// Negative subsets drawn.
    #[arg(long, value_name = "N", default_value_t = 10)]
    pub subsets: usize,
    #[arg(long, value_name = "K", default_value_t = 10)]
    pub folds: usize,
    #[arg(long, value_name = "FRACTION", default_value_t = 0.7)]
    pub train_fraction: f64,
    /// Shuffles per feature for permutation importance.
    #[arg(long, value_name = "N", default_value_t = 5)]
    pub shuffles: usize,
}

#[derive(Debug, Args, Serialize)]
pub struct EvaluateArgs {
    #[command(flatten)]
    pub io: DataOut,
    /// Model document written by `train`.
    #[arg(long, value_name = "FILE")]
    pub model: PathBuf,
}

/// A failure with its exit status and a one-line reason.
#[derive(Debug)]
pub struct CliError {
    pub code: u8,
    pub kind: &'static str,
    pub message: String,
}

pub const EXIT_USAGE: u8 = 2;
pub const EXIT_VALIDATION: u8 = 3;
pub const EXIT_COMPUTATION: u8 = 4;

impl CliError {
    pub fn usage(message: impl Into<String>) -> CliError {
        CliError {
            code: EXIT_USAGE,
            kind: "usage",
            message: message.into(),
        }
    }

    pub fn validation(message: impl Into<String>) -> CliError {
        CliError {
            code: EXIT_VALIDATION,
            kind: "validation",
            message: message.into(),
        }
    }

    pub fn computation(e: impl std::fmt::Display) -> CliError {
        CliError {
            code: EXIT_COMPUTATION,
            kind: "computation",
            message: e.to_string(),
        }
    }

    pub fn input(path: &Path, e: std::io::Error) -> CliError {
        CliError::validation(format!("cannot read {}: {e}", path.display()))
    }

    pub fn output(path: &Path, e: std::io::Error) -> CliError {
        CliError {
            code: EXIT_COMPUTATION,
            kind: "output",
            message: format!("cannot write {}: {e}", path.display()),
        }
    }

    fn line(&self) -> String {
        let flat: String = self.message.split_whitespace().collect::<Vec<_>>().join(" ");
        format!("shadowmarket: error={} code={} reason={:?}", self.kind, self.code, flat)
    }
}

impl From<Error> for CliError {
    fn from(e: Error) -> CliError {
        match e {
            Error::Validation(_) | Error::Io { .. } => CliError::validation(e.to_string()),
            Error::InfeasibleConfig(_) => CliError::usage(e.to_string()),
            other => CliError::computation(other),
        }
    }
}

fn main() -> ExitCode {
    env_logger::Builder::from_env(env_logger::Env::new().filter_or("SHADOWMARKET_LOG", "warn"))
        .format_timestamp(None)
        .init();
    let cli = match Cli::try_parse() {
        Ok(c) => c,
        Err(e) => {
            use clap::error::ErrorKind;
            if matches!(e.kind(), ErrorKind::DisplayHelp | ErrorKind::DisplayVersion) {
                let _ = e.print();
                return ExitCode::SUCCESS;
            }
            let first = e.to_string().lines().next().unwrap_or("invalid arguments").to_string();
            let _ = e.print();
            eprintln!("{}", CliError::usage(first.trim_start_matches("error: ")).line());
            return ExitCode::from(EXIT_USAGE);
        }
    };
    if let Some(n) = cli.jobs {
        if n == 0 {
            eprintln!("{}", CliError::usage("--jobs must be at least 1").line());
            return ExitCode::from(EXIT_USAGE);
        }
        if let Err(e) = rayon::ThreadPoolBuilder::new().num_threads(n).build_global() {
            log::warn!("thread pool already initialised: {e}");
        }
    }
    match commands::run(&cli) {
        Ok(()) => ExitCode::SUCCESS,
        Err(e) => {
            eprintln!("{}", e.line());
            ExitCode::from(e.code)
        }
    }
}
