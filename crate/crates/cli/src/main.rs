mod commands;

use std::path::PathBuf;
use std::process::ExitCode;

use clap::{Parser, Subcommand, ValueEnum};

/// Train, evaluate and run causal gated-convolution load disaggregation models.
#[derive(Debug, Parser)]
#[command(name = "wavenilm", version)]
struct Cli {
    #[command(subcommand)]
    command: Command,
}

#[derive(Debug, Subcommand)]
enum Command {
    /// Train on the leading part of a dataset, test on the tail.
    Train {
        #[arg(long)]
        config: PathBuf,
        /// Overrides both the initialization and training seeds.
        #[arg(long)]
        seed: Option<u64>,
        /// Run directory (default: runs/<config name>).
        #[arg(long)]
        out: Option<PathBuf>,
    },
    /// Evaluate a checkpoint, or with --matrix train and test every
    /// input-signal combination.
    Eval {
        #[arg(long)]
        config: PathBuf,
        #[arg(long, required_unless_present = "matrix")]
        checkpoint: Option<PathBuf>,
        #[arg(long)]
        matrix: bool,
        #[arg(long, value_enum, default_value_t = Split::Test)]
        split: Split,
        #[arg(long)]
        seed: Option<u64>,
        /// Output directory (default: eval-<split> next to the checkpoint, or
        /// runs/<config name>-matrix).
        #[arg(long)]
        out: Option<PathBuf>,
    },
    /// k-fold cross-validation over contiguous folds.
    Cv {
        #[arg(long)]
        config: PathBuf,
        #[arg(long, default_value_t = 10)]
        folds: usize,
        #[arg(long)]
        seed: Option<u64>,
        #[arg(long)]
        out: Option<PathBuf>,
    },
    /// Read one sample per stdin line (input channels, comma-separated) and
    /// write per-load estimates to stdout.
    Stream {
        #[arg(long)]
        checkpoint: PathBuf,
    },
    /// Generate a synthetic household dataset as CSV.
    Synth {
        /// Household description; the built-in deferrable-load house if absent.
        #[arg(long)]
        config: Option<PathBuf>,
        #[arg(long)]
        seed: Option<u64>,
        /// Days to generate when no config is given.
        #[arg(long, default_value_t = 30)]
        days: usize,
        /// Output file (default: stdout).
        #[arg(long)]
        out: Option<PathBuf>,
    },
    /// Print parameter count, receptive field and configuration.
    Inspect {
        #[arg(long, required_unless_present = "config")]
        checkpoint: Option<PathBuf>,
        /// Experiment config whose network is described instead.
        #[arg(long)]
        config: Option<PathBuf>,
    },
}

#[derive(Debug, Clone, Copy, PartialEq, Eq, ValueEnum)]
pub enum Split {
    Train,
    Test,
    All,
}

fn main() -> ExitCode {
    env_logger::Builder::from_env(env_logger::Env::new().filter_or("WAVENILM_LOG", "info"))
        .format_timestamp(None)
        .init();
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
    let result = match cli.command {
        Command::Train { config, seed, out } => commands::train(&config, seed, out),
        Command::Eval {
            config,
            checkpoint,
            matrix: true,
            seed,
            out,
            ..
        } => {
            if checkpoint.is_some() {
                log::warn!("--checkpoint is ignored with --matrix");
            }
            commands::matrix(&config, seed, out)
        }
        Command::Eval {
            config,
            checkpoint,
            split,
            out,
            ..
        } => commands::eval(&config, &checkpoint.expect("required by clap"), split, out),
        Command::Cv {
            config,
            folds,
            seed,
            out,
        } => commands::cross_validate(&config, folds, seed, out),
        Command::Stream { checkpoint } => commands::stream(&checkpoint),
        Command::Synth {
            config,
            seed,
            days,
            out,
        } => commands::synth(config.as_deref(), seed, days, out.as_deref()),
        Command::Inspect { checkpoint, config } => {
            commands::inspect(checkpoint.as_deref(), config.as_deref())
        }
    };
    match result {
        Ok(()) => ExitCode::SUCCESS,
        Err(e) => {
            eprintln!("error: {e:#}");
            ExitCode::from(commands::exit_code(&e))
        }
    }
}
