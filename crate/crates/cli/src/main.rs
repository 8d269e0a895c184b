//! `svm-clt`: command-line front end for regularized kernel estimation and
//! its asymptotic-normality diagnostics.

#![allow(clippy::neg_cmp_op_on_partial_ord)]

mod commands;
mod config;
mod output;

use std::path::PathBuf;
use std::process::ExitCode;

use clap::{Parser, Subcommand};
use svm_clt::Error;

use crate::config::Config;
use crate::output::OutputDir;

#[derive(Parser)]
#[command(name = "svm-clt", version, about)]
struct Cli {
    #[command(subcommand)]
    command: Command,
    /// TOML configuration file.
    #[arg(short, long, global = true)]
    config: Option<PathBuf>,
    /// Directory for all output files.
    #[arg(short, long, global = true, default_value = ".")]
    out: PathBuf,
    /// Overrides the seed from the configuration.
    #[arg(long, global = true)]
    seed: Option<u64>,
}

#[derive(Subcommand, Clone, Copy)]
enum Command {
    /// Fit the estimator on a measure.
    Solve,
    /// Influence functions at the configured points.
    Influence,
    /// Plug-in covariance on a grid and the risk scale.
    Covariance,
    /// Test whether the Gaussian limit degenerates.
    Degeneracy,
    /// Finite-difference check of the derivative.
    FdCheck,
    /// Monte Carlo certification of the limit laws.
    McClt,
    /// Tabulate a mollified Lipschitz loss.
    MollifyTable,
}

fn run(cli: &Cli) -> svm_clt::Result<()> {
    let mut cfg = match &cli.config {
        Some(path) => Config::load(path)?,
        None if matches!(cli.command, Command::MollifyTable) => {
            toml::from_str("").map_err(|e| Error::Input(e.to_string()))?
        }
        None => return Err(Error::Input("--config is required".into())),
    };
    if let Some(seed) = cli.seed {
        cfg.seed = seed;
    }
    let out = OutputDir::create(&cli.out)?;
    match cli.command {
        Command::Solve => commands::solve(&cfg, &out),
        Command::Influence => commands::influence(&cfg, &out),
        Command::Covariance => commands::covariance(&cfg, &out),
        Command::Degeneracy => commands::degeneracy(&cfg, &out),
        Command::FdCheck => commands::fd_check(&cfg, &out),
        Command::McClt => commands::mc_clt(&cfg, &out),
        Command::MollifyTable => commands::mollify_table(&cfg, &out),
    }
}

fn fail(code: u8, msg: &str) -> ExitCode {
    let line = msg.split_whitespace().collect::<Vec<_>>().join(" ");
    eprintln!("ERROR: {line}");
    ExitCode::from(code)
}

fn main() -> ExitCode {
    let cli = match Cli::try_parse() {
        Ok(cli) => cli,
        Err(e) if !e.use_stderr() => {
            let _ = e.print();
            return ExitCode::SUCCESS;
        }
        Err(e) => {
            let first = e.to_string();
            let first = first.lines().next().unwrap_or("invalid arguments");
            return fail(1, first.trim_start_matches("error: "));
        }
    };
    match run(&cli) {
        Ok(()) => ExitCode::SUCCESS,
        Err(e @ Error::Input(_)) => fail(1, &e.to_string()),
        Err(e) => fail(2, &e.to_string()),
    }
}
