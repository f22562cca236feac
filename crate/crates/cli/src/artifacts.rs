//! On-disk artifacts: summaries, loss history, model and tables.

use std::fs;
use std::path::Path;

use serde::{Deserialize, Serialize};
use sgp_core::elbo::GridCell;
use sgp_core::gauss_newton::SolutionModel;
use sgp_core::kernel::KernelSpec;

use crate::CliError;

pub const SCHEMA_VERSION: u32 = 1;

pub const RUN_SUMMARY: &str = "run_summary.json";
pub const LOSS_HISTORY: &str = "loss_history.csv";
pub const ERROR_GRID: &str = "error_grid.csv";
pub const MODEL: &str = "model.json";
pub const HYPEROPT_TABLE: &str = "hyperopt.csv";
pub const HYPEROPT_SUMMARY: &str = "hyperopt_summary.json";
pub const BATCH_SEEDS: &str = "batch_seeds.csv";
pub const BATCH_AGGREGATE: &str = "batch_aggregate.csv";

#[derive(Clone, Debug, PartialEq, Serialize, Deserialize)]
pub struct DiagnosticsReport {
    pub psi_len: usize,
    pub nystrom_error: f64,
    pub nystrom_iterations: usize,
    pub nystrom_converged: bool,
    /// Sup-norm of `F(psi(u)) - y` for the returned representer.
    pub collocation_residual: f64,
}

#[derive(Clone, Debug, PartialEq, Serialize, Deserialize)]
pub struct RunSummary {
    pub schema_version: u32,
    pub command: String,
    pub problem: String,
    #[serde(rename = "N")]
    pub n: usize,
    #[serde(rename = "M")]
    pub m: usize,
    pub interior_ratio: f64,
    pub kernel: KernelSpec,
    pub nu: Option<f64>,
    pub gamma: f64,
    pub eta: f64,
    pub eta_used: f64,
    pub seed: u64,
    pub iterations: usize,
    pub converged: bool,
    pub non_monotone: bool,
    pub final_loss: f64,
    pub gradient_norm: f64,
    /// Sup-norm of `F(z) - y` at the optimum.
    pub constraint_residual: f64,
    /// Sum of squares of `F(z) - y` at the optimum.
    pub residual_sq: f64,
    /// Absent when the problem has no reference.
    pub linf: Option<f64>,
    pub reference: Option<String>,
    pub grid_resolution: usize,
    pub wall_time: f64,
    pub diagnostics: Option<DiagnosticsReport>,
}

#[derive(Clone, Debug, PartialEq, Serialize, Deserialize)]
pub struct NamedModel {
    pub field: String,
    pub model: SolutionModel,
}

#[derive(Clone, Debug, PartialEq, Serialize, Deserialize)]
pub struct ModelFile {
    pub schema_version: u32,
    pub problem: String,
    pub fields: Vec<NamedModel>,
}

#[derive(Clone, Debug, PartialEq, Serialize, Deserialize)]
pub struct HyperoptSummary {
    pub schema_version: u32,
    pub problem: String,
    #[serde(rename = "N")]
    pub n: usize,
    #[serde(rename = "M")]
    pub m: usize,
    pub seed: u64,
    pub best_sigma: f64,
    pub best_elbo: Option<f64>,
    pub best_linf: Option<f64>,
    /// Lengthscale with the smallest grid error, when a reference exists.
    pub lowest_linf_sigma: Option<f64>,
    pub lowest_linf: Option<f64>,
    pub cells: usize,
    pub failed_cells: usize,
}

/// One `(N, M)` row of the batch aggregate.
#[derive(Clone, Debug, PartialEq, Serialize, Deserialize)]
pub struct AggregateRow {
    #[serde(rename = "N")]
    pub n: usize,
    #[serde(rename = "M")]
    pub m: usize,
    pub seeds_ok: usize,
    pub seeds_failed: usize,
    pub mean_linf: Option<f64>,
    pub std_linf: Option<f64>,
    pub mean_iterations: Option<f64>,
    pub mean_final_loss: Option<f64>,
    pub mean_wall_time: Option<f64>,
}

#[derive(Clone, Debug, PartialEq, Serialize, Deserialize)]
pub struct SeedRow {
    #[serde(rename = "N")]
    pub n: usize,
    #[serde(rename = "M")]
    pub m: usize,
    pub seed: u64,
    pub status: String,
    pub linf: Option<f64>,
    pub iterations: Option<usize>,
    pub final_loss: Option<f64>,
    pub wall_time: Option<f64>,
}

fn out_err(path: &Path, e: impl std::fmt::Display) -> CliError {
    CliError::Output(format!("{}: {e}", path.display()))
}

pub fn write_json<T: Serialize>(path: &Path, value: &T) -> Result<(), CliError> {
    let mut text = serde_json::to_string_pretty(value).map_err(|e| out_err(path, e))?;
    text.push('\n');
    fs::write(path, text).map_err(|e| out_err(path, e))
}

pub fn read_json<T: for<'de> Deserialize<'de>>(path: &Path) -> Result<T, CliError> {
    let text = fs::read_to_string(path).map_err(|e| out_err(path, e))?;
    serde_json::from_str(&text).map_err(|e| out_err(path, e))
}

pub fn write_rows<T: Serialize>(path: &Path, rows: &[T]) -> Result<(), CliError> {
    let mut w = csv::Writer::from_path(path).map_err(|e| out_err(path, e))?;
    for r in rows {
        w.serialize(r).map_err(|e| out_err(path, e))?;
    }
    w.flush().map_err(|e| out_err(path, e))
}

pub fn write_loss_history(path: &Path, history: &[f64]) -> Result<(), CliError> {
    #[derive(Serialize)]
    struct Row {
        iteration: usize,
        loss: f64,
    }
    let rows: Vec<Row> = history
        .iter()
        .enumerate()
        .map(|(iteration, &loss)| Row { iteration, loss })
        .collect();
    write_rows(path, &rows)
}

pub fn write_hyperopt_table(path: &Path, table: &[GridCell]) -> Result<(), CliError> {
    write_rows(path, table)
}
