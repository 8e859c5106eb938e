use std::fs::File;
use std::io::{self, BufRead, BufReader, BufWriter, Write};
use std::path::{Path, PathBuf};
use std::process::ExitCode;

use clap::{Parser, Subcommand};

use gapo_cli::{cmd_advantage, cmd_analyze, cmd_reward, cmd_simulate, CliError, StreamStats};
use gapo_core::advantage::DEFAULT_DEGENERATE_THRESHOLD;
use gapo_core::analysis::{AnalysisConfig, DEFAULT_SKEW_THRESHOLD};
use gapo_core::hdi::DEFAULT_TAU;
use gapo_core::{AdvantageConfig, Estimator};

#[derive(Parser)]
#[command(
    name = "gapo",
    version,
    about = "Group-relative advantage estimation tools"
)]
struct Cli {
    #[command(subcommand)]
    command: Command,
}

#[derive(clap::Args)]
struct Io {
    /// Read from this file instead of standard input.
    #[arg(long)]
    input: Option<PathBuf>,
    /// Write to this file instead of standard output.
    #[arg(long)]
    output: Option<PathBuf>,
}

#[derive(Subcommand)]
enum Command {
    /// Per-group advantages for a JSONL stream of {"prompt_id", "rewards"}.
    Advantage {
        #[arg(long, value_parser = parse_estimator, default_value = "gapo-median-div")]
        estimator: Estimator,
        #[arg(long, env = "GAPO_TAU", default_value_t = DEFAULT_TAU)]
        tau: f64,
        #[arg(long, default_value_t = DEFAULT_DEGENERATE_THRESHOLD)]
        degenerate_threshold: f64,
        #[command(flatten)]
        io: Io,
    },
    /// Composite edit reward for a JSONL stream of {"predicted", "truth"}.
    Reward {
        #[command(flatten)]
        io: Io,
    },
    /// Skew taxonomy report for a JSONL stream of reward groups.
    Analyze {
        #[arg(long, env = "GAPO_TAU", default_value_t = DEFAULT_TAU)]
        tau: f64,
        #[arg(long, default_value_t = DEFAULT_SKEW_THRESHOLD)]
        skew_threshold: f64,
        #[command(flatten)]
        io: Io,
    },
    /// Run a simulator experiment from a key = value config file.
    Simulate {
        #[arg(long)]
        config: PathBuf,
        /// Output directory for metrics.jsonl and summary.json.
        #[arg(long)]
        out: PathBuf,
    },
}

fn parse_estimator(s: &str) -> Result<Estimator, String> {
    s.parse().map_err(|e: gapo_core::GapoError| e.to_string())
}

fn open_input(path: Option<&Path>) -> Result<Box<dyn BufRead>, CliError> {
    Ok(match path {
        Some(p) => Box::new(BufReader::new(File::open(p).map_err(CliError::at(p))?)),
        None => Box::new(io::stdin().lock()),
    })
}

fn open_output(path: Option<&Path>) -> Result<Box<dyn Write>, CliError> {
    Ok(match path {
        Some(p) => Box::new(BufWriter::new(File::create(p).map_err(CliError::at(p))?)),
        None => Box::new(BufWriter::new(io::stdout().lock())),
    })
}

fn run(cli: Cli) -> Result<(), CliError> {
    let mut diag = io::stderr().lock();
    match cli.command {
        Command::Advantage {
            estimator,
            tau,
            degenerate_threshold,
            io,
        } => {
            let config = AdvantageConfig {
                estimator,
                tau,
                degenerate_threshold,
            };
            let input = open_input(io.input.as_deref())?;
            let output = open_output(io.output.as_deref())?;
            cmd_advantage(input, output, &mut diag, &config).and_then(StreamStats::into_result)?;
        }
        Command::Reward { io } => {
            let input = open_input(io.input.as_deref())?;
            let output = open_output(io.output.as_deref())?;
            cmd_reward(input, output, &mut diag).and_then(StreamStats::into_result)?;
        }
        Command::Analyze {
            tau,
            skew_threshold,
            io,
        } => {
            let config = AnalysisConfig {
                tau,
                skew_threshold,
            };
            let input = open_input(io.input.as_deref())?;
            let output = open_output(io.output.as_deref())?;
            cmd_analyze(input, output, &mut diag, &config).and_then(StreamStats::into_result)?;
        }
        Command::Simulate { config, out } => {
            cmd_simulate(&config, &out)?;
        }
    }
    Ok(())
}

fn main() -> ExitCode {
    match run(Cli::parse()) {
        Ok(()) => ExitCode::SUCCESS,
        Err(e) => {
            eprintln!("gapo: {e}");
            ExitCode::FAILURE
        }
    }
}
