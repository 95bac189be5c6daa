//! `hdglht`: high-dimensional mean-vector tests on grouped CSV data, plus a
//! reproducible simulation harness.

mod commands;
mod config;
mod dataset;
mod error;

use std::path::PathBuf;
use std::process::ExitCode;

use clap::{Parser, Subcommand};

use config::Overrides;

#[derive(Parser)]
#[command(
    name = "hdglht",
    version,
    about = "Mean-vector hypothesis tests for high-dimensional grouped data"
)]
struct Cli {
    #[command(subcommand)]
    command: Command,
}

#[derive(Subcommand)]
enum Command {
    /// Test a linear hypothesis on a grouped CSV dataset (JSON on stdout)
    Test {
        /// Grouped CSV dataset (column 1 = group label)
        #[arg(long)]
        data: PathBuf,
        /// JSON run configuration
        #[arg(long)]
        config: PathBuf,
        /// Significance level override
        #[arg(long)]
        level: Option<f64>,
    },
    /// Run replicated simulations; writes CSV/JSON artifacts
    Simulate {
        /// JSON run configuration with a 'simulate' section
        #[arg(long)]
        config: PathBuf,
        /// Output directory for report.json / size_table.csv / power_curve.csv
        #[arg(long, default_value = "sim-out")]
        out_dir: PathBuf,
        /// Seed override
        #[arg(long)]
        seed: Option<u64>,
        /// Thread budget override (also HDGLHT_THREADS)
        #[arg(long)]
        threads: Option<usize>,
        /// Significance level override
        #[arg(long)]
        level: Option<f64>,
    },
    /// Test every unordered pair of groups (JSON p-value table on stdout)
    Contrasts {
        /// Grouped CSV dataset
        #[arg(long)]
        data: PathBuf,
        /// Optional JSON run configuration (weights, exponent mode, level)
        #[arg(long)]
        config: Option<PathBuf>,
        /// Significance level override
        #[arg(long)]
        level: Option<f64>,
    },
    /// Generate a synthetic grouped CSV dataset from a simulate config
    EmitData {
        /// JSON run configuration with a 'simulate' section
        #[arg(long)]
        config: PathBuf,
        /// Output CSV path
        #[arg(long)]
        out: PathBuf,
        /// Seed override
        #[arg(long)]
        seed: Option<u64>,
        /// Replicate id to emit
        #[arg(long, default_value_t = 1)]
        replicate: u64,
    },
}

fn main() -> ExitCode {
    let cli = Cli::parse();
    let result = match cli.command {
        Command::Test { data, config, level } => commands::cmd_test(&data, &config, level),
        Command::Simulate {
            config,
            out_dir,
            seed,
            threads,
            level,
        } => commands::cmd_simulate(
            &config,
            &out_dir,
            Overrides {
                seed,
                threads,
                level,
            },
        ),
        Command::Contrasts { data, config, level } => {
            commands::cmd_contrasts(&data, config.as_deref(), level)
        }
        Command::EmitData {
            config,
            out,
            seed,
            replicate,
        } => commands::cmd_emit_data(&config, &out, seed, replicate),
    };
    match result {
        Ok(()) => ExitCode::SUCCESS,
        Err(e) => {
            eprintln!("error: {e}");
            ExitCode::from(e.exit_code())
        }
    }
}
