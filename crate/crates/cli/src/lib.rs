//! Config-driven runner for sparse GP PDE solves.
//!
//! `sgp-pde {solve|batch|hyperopt|diagnose} --config run.json` reads one JSON
//! document, fills per-problem defaults and writes its artifacts to the output
//! directory (`SGP_OUTPUT_DIR` overrides the config). Exit status is 0 on success,
//! 2 for invalid input and 3 for numerical failure.

pub mod artifacts;
pub mod commands;
pub mod config;

use std::path::PathBuf;

use clap::{Parser, Subcommand};
use sgp_core::SgpError;

#[derive(Debug, thiserror::Error)]
pub enum CliError {
    #[error("invalid configuration: {0}")]
    Config(String),
    #[error(transparent)]
    Core(#[from] SgpError),
    #[error("cannot write output: {0}")]
    Output(String),
}

impl CliError {
    pub fn exit_code(&self) -> i32 {
        match self {
            CliError::Config(_) => 2,
            CliError::Core(
                SgpError::InvalidArgument(_)
                | SgpError::InvalidConfiguration(_)
                | SgpError::UnsupportedOperator(_)
                | SgpError::Ingestion { .. },
            ) => 2,
            CliError::Core(_) | CliError::Output(_) => 3,
        }
    }
}

#[derive(Debug, Parser)]
#[command(name = "sgp-pde", version, about = "Sparse Gaussian process collocation solver for nonlinear PDEs")]
pub struct Cli {
    #[command(subcommand)]
    pub command: Command,
}

#[derive(Debug, Subcommand)]
pub enum Command {
    /// Solve one instance.
    Solve {
        #[arg(long)]
        config: PathBuf,
    },
    /// Solve every (N, M, seed) combination and aggregate the errors.
    Batch {
        #[arg(long)]
        config: PathBuf,
    },
    /// Grid search of the kernel lengthscale by the variational bound.
    Hyperopt {
        #[arg(long)]
        config: PathBuf,
    },
    /// Solve with the dense Nystrom diagnostics.
    Diagnose {
        #[arg(long)]
        config: PathBuf,
    },
}

/// Runs a parsed command and returns the line to print on success.
pub fn execute(cli: &Cli) -> Result<String, CliError> {
    match &cli.command {
        Command::Solve { config } => {
            let res = commands::prepare(config)?;
            let s = commands::run_solve(&res)?;
            Ok(format!(
                "{}: {} iterations, final loss {:e}, linf {}, {:.1} s -> {}",
                s.problem,
                s.iterations,
                s.final_loss,
                fmt_opt(s.linf),
                s.wall_time,
                res.output_dir.display()
            ))
        }
        Command::Batch { config } => {
            let res = commands::prepare(config)?;
            let rows = commands::run_batch(&res)?;
            let lines: Vec<String> = rows
                .iter()
                .map(|r| {
                    format!(
                        "N = {}, M = {}: {} ok, {} failed, mean linf {}, std {}",
                        r.n,
                        r.m,
                        r.seeds_ok,
                        r.seeds_failed,
                        fmt_opt(r.mean_linf),
                        fmt_opt(r.std_linf)
                    )
                })
                .collect();
            Ok(lines.join("\n"))
        }
        Command::Hyperopt { config } => {
            let res = commands::prepare(config)?;
            let s = commands::run_hyperopt(&res)?;
            Ok(format!(
                "best sigma {} (elbo {}, linf {}) over {} cells",
                s.best_sigma,
                fmt_opt(s.best_elbo),
                fmt_opt(s.best_linf),
                s.cells
            ))
        }
        Command::Diagnose { config } => {
            let res = commands::prepare(config)?;
            let s = commands::run_diagnose(&res)?;
            let d = s.diagnostics.as_ref().expect("diagnose always reports");
            Ok(format!(
                "nystrom error {:e}, constraint residual {:e}, collocation residual {:e}",
                d.nystrom_error, s.constraint_residual, d.collocation_residual
            ))
        }
    }
}

fn fmt_opt(v: Option<f64>) -> String {
    v.map_or_else(|| "n/a".to_string(), |x| format!("{x:e}"))
}
