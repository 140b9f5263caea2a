mod commands;
mod config;

use std::path::PathBuf;
use std::process::ExitCode;

use clap::{Parser, Subcommand};
use mkgp::ErrorKind;

use config::{ClientArgs, DataArgs, KernelArgs, SelectArgs, StrategyArg, TrainArgs};

#[derive(Debug, Parser)]
#[command(name = "mkgp", version, about = "Multi-kernel GP demonstration selection for in-context learning")]
struct Cli {
    /// TOML file with defaults for any option below.
    #[arg(long, global = true)]
    config: Option<PathBuf>,
    /// Directory receiving every output of the run [default: mkgp-out].
    #[arg(long, global = true)]
    output_dir: Option<PathBuf>,
    /// Root seed; every stage derives its own seed from it [default: 0].
    #[arg(long, global = true)]
    seed: Option<u64>,
    /// More log output (-v info, -vv debug). RUST_LOG overrides.
    #[arg(short, long, global = true, action = clap::ArgAction::Count)]
    verbose: u8,
    #[command(subcommand)]
    command: Command,
}

#[derive(Debug, Subcommand)]
enum Command {
    /// Fit kernel parameters and class means on the annotated pool.
    Train {
        #[command(flatten)]
        data: DataArgs,
        #[command(flatten)]
        kernel: KernelArgs,
        #[command(flatten)]
        train: TrainArgs,
    },
    /// Write the top-S candidates for every query.
    Retrieve {
        #[command(flatten)]
        data: DataArgs,
        #[command(flatten)]
        select: SelectArgs,
        /// Trained model (needed for mkgp) [default: OUTPUT_DIR/model.json].
        #[arg(long)]
        model: Option<PathBuf>,
        #[arg(long, value_enum)]
        strategy: Option<StrategyArg>,
    },
    /// Write the importance-weighted coreset of the annotated pool.
    Coreset {
        #[command(flatten)]
        data: DataArgs,
        #[command(flatten)]
        select: SelectArgs,
    },
    /// Generate label rationales from the coreset.
    Rationales {
        #[command(flatten)]
        data: DataArgs,
        #[command(flatten)]
        select: SelectArgs,
        #[command(flatten)]
        client: ClientArgs,
    },
    /// Classify held-out queries with each selection strategy.
    Evaluate {
        #[command(flatten)]
        data: DataArgs,
        #[command(flatten)]
        select: SelectArgs,
        #[command(flatten)]
        client: ClientArgs,
        /// Trained model (needed for mkgp) [default: OUTPUT_DIR/model.json].
        #[arg(long)]
        model: Option<PathBuf>,
        /// Strategies to compare [default: all four].
        #[arg(long, value_enum, value_delimiter = ',')]
        strategy: Option<Vec<StrategyArg>>,
    },
    /// Train and evaluate Matérn-only, polynomial-only and combined kernels.
    Ablate {
        #[command(flatten)]
        data: DataArgs,
        #[command(flatten)]
        kernel: KernelArgs,
        #[command(flatten)]
        train: TrainArgs,
        #[command(flatten)]
        select: SelectArgs,
        #[command(flatten)]
        client: ClientArgs,
    },
}

/// Bad or missing options; exits with status 1.
#[derive(Debug)]
pub struct UsageError(pub String);

#[derive(Debug)]
pub enum CliError {
    Usage(UsageError),
    Run(mkgp::Error),
}

impl From<UsageError> for CliError {
    fn from(e: UsageError) -> Self {
        CliError::Usage(e)
    }
}

impl From<mkgp::Error> for CliError {
    fn from(e: mkgp::Error) -> Self {
        CliError::Run(e)
    }
}

fn init_logging(verbose: u8) {
    let level = match verbose {
        0 => "warn",
        1 => "info",
        _ => "debug",
    };
    let _ = env_logger::Builder::from_env(env_logger::Env::default().default_filter_or(level))
        .format_timestamp(None)
        .try_init();
}

fn main() -> ExitCode {
    let cli = match Cli::try_parse() {
        Ok(cli) => cli,
        Err(e) => {
            let _ = e.print();
            return ExitCode::from(if e.use_stderr() { 1 } else { 0 });
        }
    };
    init_logging(cli.verbose);
    match commands::run(cli) {
        Ok(()) => ExitCode::SUCCESS,
        Err(CliError::Usage(UsageError(msg))) => {
            eprintln!("error: {msg}\n\nFor more information, try '--help'.");
            ExitCode::from(1)
        }
        Err(CliError::Run(e)) => {
            eprintln!("error: {e}");
            ExitCode::from(match e.kind() {
                ErrorKind::Data => 2,
                ErrorKind::Numerical => 3,
                ErrorKind::Client => 4,
            })
        }
    }
}
