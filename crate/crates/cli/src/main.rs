mod commands;
mod manifest;
mod settings;

use std::path::PathBuf;
use std::process::ExitCode;

use clap::{Args, Parser, Subcommand, ValueEnum};

use settings::Overrides;

#[derive(Parser, Debug)]
#[command(
    name = "piecegen",
    version,
    about = "Retrieval-guided code generation over action trees"
)]
struct Cli {
    /// TOML run configuration.
    #[arg(long, global = true, env = "PIECEGEN_CONFIG")]
    config: Option<PathBuf>,

    /// Where to write the run manifest (defaults next to the output file).
    #[arg(long, global = true, env = "PIECEGEN_MANIFEST")]
    manifest: Option<PathBuf>,

    #[command(flatten)]
    overrides: Overrides,

    #[command(subcommand)]
    command: Command,
}

#[derive(Subcommand, Debug)]
enum Command {
    /// Parse a training corpus and write a retrieval index.
    BuildIndex(BuildIndexArgs),
    /// Decode a query file into one JSON prediction per line.
    Generate(GenerateArgs),
    /// Score predictions against gold code, optionally against a baseline.
    Eval(EvalArgs),
    /// Print the normalized piece table built for one query.
    InspectPieces(InspectArgs),
    /// Load corpus splits and report their sizes and averages.
    ValidateCorpus(ValidateArgs),
}

#[derive(Args, Debug)]
struct BuildIndexArgs {
    /// Training corpus (JSON Lines); defaults to `train` from the config.
    #[arg(long)]
    train: Option<PathBuf>,
    #[arg(long, short)]
    out: PathBuf,
}

#[derive(Args, Debug)]
struct GenerateArgs {
    /// Retrieval index; also the scorer's training data.
    #[arg(long)]
    index: Option<PathBuf>,
    /// Training corpus for the scorer when no index is given.
    #[arg(long)]
    train: Option<PathBuf>,
    /// Decode with the base scorer alone.
    #[arg(long)]
    no_retrieval: bool,
    /// Query file; defaults to `test` from the config.
    #[arg(long)]
    queries: Option<PathBuf>,
    /// Predictions file; stdout when omitted.
    #[arg(long, short)]
    out: Option<PathBuf>,
    #[arg(long, env = "PIECEGEN_JOBS", default_value_t = 1)]
    jobs: usize,
    /// Largest tolerated share of failed queries before exiting with 3.
    #[arg(long, default_value_t = 0.5)]
    max_failure_rate: f64,
}

#[derive(Clone, Copy, Debug, PartialEq, Eq, ValueEnum)]
enum Format {
    Json,
    Table,
}

#[derive(Args, Debug)]
struct EvalArgs {
    #[arg(long)]
    preds: PathBuf,
    /// Gold corpus; defaults to `test` from the config.
    #[arg(long)]
    gold: Option<PathBuf>,
    /// Baseline predictions for bootstrap significance.
    #[arg(long)]
    baseline: Option<PathBuf>,
    #[arg(long, value_enum, default_value_t = Format::Table)]
    format: Format,
    #[arg(long, short)]
    out: Option<PathBuf>,
}

#[derive(Args, Debug)]
struct InspectArgs {
    #[arg(long)]
    index: PathBuf,
    /// Query description, whitespace separated.
    #[arg(long)]
    query: String,
}

#[derive(Args, Debug)]
struct ValidateArgs {
    #[arg(long)]
    train: Option<PathBuf>,
    #[arg(long)]
    dev: Option<PathBuf>,
    #[arg(long)]
    test: Option<PathBuf>,
    #[arg(long, value_enum, default_value_t = Format::Table)]
    format: Format,
}

/// Failure classes mapped to process exit codes.
#[derive(Debug)]
pub enum Failure {
    Usage(anyhow::Error),
    Data(anyhow::Error),
    Decode(String),
}

impl Failure {
    fn code(&self) -> u8 {
        match self {
            Failure::Usage(_) => 1,
            Failure::Data(_) => 2,
            Failure::Decode(_) => 3,
        }
    }
}

pub trait Classify<T> {
    fn usage(self) -> Result<T, Failure>;
    fn data(self) -> Result<T, Failure>;
}

impl<T, E: Into<anyhow::Error>> Classify<T> for Result<T, E> {
    fn usage(self) -> Result<T, Failure> {
        self.map_err(|e| Failure::Usage(e.into()))
    }

    fn data(self) -> Result<T, Failure> {
        self.map_err(|e| Failure::Data(e.into()))
    }
}

fn main() -> ExitCode {
    env_logger::Builder::from_env(env_logger::Env::default().default_filter_or("warn")).init();
    let cli = match Cli::try_parse() {
        Ok(cli) => cli,
        Err(e) => {
            let _ = e.print();
            return if e.use_stderr() {
                ExitCode::from(1)
            } else {
                ExitCode::SUCCESS
            };
        }
    };
    match commands::run(cli) {
        Ok(()) => ExitCode::SUCCESS,
        Err(failure) => {
            match &failure {
                Failure::Usage(e) | Failure::Data(e) => eprintln!("error: {e:#}"),
                Failure::Decode(msg) => eprintln!("error: {msg}"),
            }
            ExitCode::from(failure.code())
        }
    }
}
