//! The `sailprice` command-line pipeline: cleaning, synthetic data,
//! fitting, model comparison, and the broker report.

use std::path::PathBuf;

use clap::{Args, Parser, Subcommand};
use thiserror::Error;

pub mod commands;
pub mod config;

pub use config::{Overrides, RunConfig};

#[derive(Debug, Error)]
pub enum CliError {
    #[error("usage: {0}")]
    Usage(String),
    #[error("i/o: {0}")]
    Io(String),
    #[error("{0}")]
    Data(String),
    #[error(transparent)]
    Core(#[from] sailprice::Error),
}

impl CliError {
    /// 0 ok, 1 I/O, 2 empty or degenerate data, 64 usage, 70 numerical.
    pub fn exit_code(&self) -> u8 {
        use sailprice::Error as E;
        match self {
            CliError::Usage(_) => 64,
            CliError::Io(_) => 1,
            CliError::Data(_) => 2,
            CliError::Core(e) => match e {
                E::FileNotFound(_) | E::Io(_) | E::Csv(_) => 1,
                E::InvalidConfig(_) | E::UnknownColumn(_) | E::DuplicateColumn(_) => 64,
                E::Diverged(_) | E::NonFiniteGradient(_) | E::NonFiniteLoss(_) | E::NotStandardized { .. } => 70,
                _ => 2,
            },
        }
    }
}

#[derive(Debug, Parser)]
#[command(name = "sailprice", version, about = "Sailboat listing-price regression toolkit")]
pub struct Cli {
    #[command(subcommand)]
    pub command: Command,
}

#[derive(Debug, Subcommand)]
pub enum Command {
    /// Apply the cleaning rules and write cleaned.csv
    Clean(CommonArgs),
    /// Write synthetic.csv from a synthetic spec (key=value) or the default market
    Synth(CommonArgs),
    /// Split, fit one model family, and write the model, metrics and residual plot
    Fit(CommonArgs),
    /// Fit every requested family, compare test errors and run the swap check
    Compare(CommonArgs),
    /// Correlations, regional effects, the Hong Kong counterfactual, and report.md
    Report(CommonArgs),
}

#[derive(Debug, Clone, Args)]
pub struct CommonArgs {
    /// Input CSV (for synth: optional synthetic spec file)
    #[arg(long)]
    pub input: Option<PathBuf>,
    /// Directory for all outputs [default: out]
    #[arg(long)]
    pub output_dir: Option<PathBuf>,
    /// Top-level seed [default: 42]
    #[arg(long)]
    pub seed: Option<u64>,
    /// Model family: ols, gd, adadelta or gbr
    #[arg(long)]
    pub model: Option<String>,
    /// Region encoding: three or four
    #[arg(long)]
    pub regions: Option<String>,
    /// Standardize continuous features before fitting
    #[arg(long)]
    pub standardize: bool,
    /// key=value config file; flags take precedence
    #[arg(long)]
    pub config: Option<PathBuf>,
}

impl From<&CommonArgs> for Overrides {
    fn from(a: &CommonArgs) -> Self {
        Overrides {
            input: a.input.clone(),
            output_dir: a.output_dir.clone(),
            seed: a.seed,
            model: a.model.clone(),
            regions: a.regions.clone(),
            standardize: a.standardize,
            config: a.config.clone(),
        }
    }
}

pub fn run(cli: &Cli) -> Result<(), CliError> {
    let (args, f): (&CommonArgs, fn(&RunConfig) -> Result<(), CliError>) = match &cli.command {
        Command::Clean(a) => (a, commands::cmd_clean),
        Command::Synth(a) => (a, commands::cmd_synth),
        Command::Fit(a) => (a, commands::cmd_fit),
        Command::Compare(a) => (a, commands::cmd_compare),
        Command::Report(a) => (a, commands::cmd_report),
    };
    let config = RunConfig::resolve(&Overrides::from(args))?;
    f(&config)
}
