//! The four subcommands.

use std::fs;
use std::path::{Path, PathBuf};
use std::time::Instant;

use sgp_core::elbo::grid_search;
use sgp_core::pipeline::{grid_error, hyperopt_cell, solve_problem, Reference, SolverSettings};
use sgp_core::problems::ProblemKind;
use sgp_core::reference::nystrom_error;

use crate::artifacts::{
    self, AggregateRow, DiagnosticsReport, HyperoptSummary, ModelFile, NamedModel, RunSummary, SeedRow, SCHEMA_VERSION,
};
use crate::config::{self, Resolved};
use crate::CliError;

/// Loads and resolves a config file.
pub fn prepare(path: &Path) -> Result<Resolved, CliError> {
    let cfg = config::load(path)?;
    let base = path.parent().unwrap_or(Path::new("."));
    let res = config::resolve(&cfg, base)?;
    if let Some(f) = &res.reference_file {
        if !f.is_file() {
            return Err(CliError::Config(format!("reference_file {} does not exist", f.display())));
        }
    }
    Ok(res)
}

fn reference_for(res: &Resolved) -> Result<Option<(Reference, String)>, CliError> {
    let r = Reference::for_problem(res.kind, res.nu, res.reference_file.as_deref())?;
    Ok(r.map(|r| {
        let label = match &r {
            Reference::Analytic(_) => "analytic".to_string(),
            Reference::ColeHopf { .. } => "cole_hopf".to_string(),
            Reference::Grid(_) => "file".to_string(),
        };
        (r, label)
    }))
}

fn create_dir(dir: &Path) -> Result<(), CliError> {
    fs::create_dir_all(dir).map_err(|e| CliError::Output(format!("{}: {e}", dir.display())))
}

fn field_names(kind: ProblemKind) -> &'static [&'static str] {
    match kind {
        ProblemKind::Mfg => &["u", "m"],
        _ => &["u"],
    }
}

/// Solves one instance and writes its artifacts into `dir`.
fn solve_into(
    res: &Resolved,
    command: &str,
    size: (usize, usize),
    seed: u64,
    reference: Option<&(Reference, String)>,
    nystrom: bool,
    dir: &Path,
) -> Result<RunSummary, CliError> {
    let start = Instant::now();
    let params = res.params(size.0, size.1, seed);
    let problem = params.build(res.settings.gamma)?;
    let psi_len = problem.spec.psi.len();
    if nystrom && psi_len > res.diagnostics.max_psi {
        return Err(CliError::Config(format!(
            "diagnostics guard: dense K(psi, psi) would be {psi_len} x {psi_len}, above max_psi = {}",
            res.diagnostics.max_psi
        )));
    }
    let settings = SolverSettings {
        dense_psi: nystrom,
        ..res.settings.clone()
    };
    let solved = solve_problem(problem, &settings)?;
    create_dir(dir)?;

    let linf = match reference {
        Some((r, _)) => {
            let (e, grid) = grid_error(&solved, r, res.resolution)?;
            grid.write_csv(&dir.join(artifacts::ERROR_GRID))?;
            Some(e)
        }
        None => None,
    };
    let diagnostics = if nystrom {
        let dense = solved.assembly.dense_psi.as_ref().expect("dense K(psi, psi) was requested");
        let report = nystrom_error(dense.as_ref(), &solved.assembly.lri)?;
        Some(DiagnosticsReport {
            psi_len,
            nystrom_error: report.error,
            nystrom_iterations: report.iterations,
            nystrom_converged: report.converged,
            collocation_residual: solved.collocation_residual()?,
        })
    } else {
        None
    };

    artifacts::write_loss_history(&dir.join(artifacts::LOSS_HISTORY), &solved.gn.loss_history)?;
    let model = ModelFile {
        schema_version: SCHEMA_VERSION,
        problem: res.kind.name().into(),
        fields: field_names(res.kind)
            .iter()
            .zip(&solved.models)
            .map(|(f, m)| NamedModel {
                field: f.to_string(),
                model: m.clone(),
            })
            .collect(),
    };
    artifacts::write_json(&dir.join(artifacts::MODEL), &model)?;

    let summary = RunSummary {
        schema_version: SCHEMA_VERSION,
        command: command.into(),
        problem: res.kind.name().into(),
        n: size.0,
        m: size.1,
        interior_ratio: res.interior_ratio,
        kernel: res.kernel.clone(),
        nu: res.nu,
        gamma: res.settings.gamma,
        eta: res.settings.eta,
        eta_used: solved.assembly.factor.eta_used,
        seed,
        iterations: solved.gn.iterations,
        converged: solved.gn.converged,
        non_monotone: solved.gn.non_monotone,
        final_loss: solved.gn.final_loss(),
        gradient_norm: solved.gn.gradient_norm,
        constraint_residual: solved.constraint_residual(),
        residual_sq: solved.residual_sq(),
        linf,
        reference: reference.map(|(_, l)| l.clone()),
        grid_resolution: res.resolution,
        wall_time: start.elapsed().as_secs_f64(),
        diagnostics,
    };
    artifacts::write_json(&dir.join(artifacts::RUN_SUMMARY), &summary)?;
    if !summary.converged {
        log::warn!(
            "Gauss-Newton stopped at max_iter = {} without meeting the step tolerance",
            res.settings.gn.max_iter
        );
    }
    Ok(summary)
}

pub fn run_solve(res: &Resolved) -> Result<RunSummary, CliError> {
    let reference = reference_for(res)?;
    let nystrom = res.diagnostics.nystrom;
    solve_into(res, "solve", (res.n, res.m), res.first_seed(), reference.as_ref(), nystrom, &res.output_dir)
}

pub fn run_diagnose(res: &Resolved) -> Result<RunSummary, CliError> {
    let reference = reference_for(res)?;
    solve_into(res, "diagnose", (res.n, res.m), res.first_seed(), reference.as_ref(), true, &res.output_dir)
}

pub fn run_hyperopt(res: &Resolved) -> Result<HyperoptSummary, CliError> {
    let reference = reference_for(res)?;
    let grid = res.hyperopt.grid()?;
    let seed = res.first_seed();
    let params = res.params(res.n, res.m, seed);
    let (best, table) = grid_search(&grid, |sigma| {
        log::info!("lengthscale {sigma}");
        hyperopt_cell(
            &params,
            &res.settings,
            sigma,
            reference.as_ref().map(|(r, _)| r),
            res.resolution,
            res.hyperopt.quad_coefficient,
        )
    })?;
    create_dir(&res.output_dir)?;
    artifacts::write_hyperopt_table(&res.output_dir.join(artifacts::HYPEROPT_TABLE), &table)?;
    let best_cell = table.iter().find(|c| c.sigma == best).expect("best lengthscale is a grid cell");
    let lowest = table
        .iter()
        .filter_map(|c| c.linf_error.map(|e| (c.sigma, e)))
        .min_by(|a, b| a.1.total_cmp(&b.1));
    let summary = HyperoptSummary {
        schema_version: SCHEMA_VERSION,
        problem: res.kind.name().into(),
        n: res.n,
        m: res.m,
        seed,
        best_sigma: best,
        best_elbo: best_cell.elbo,
        best_linf: best_cell.linf_error,
        lowest_linf_sigma: lowest.map(|l| l.0),
        lowest_linf: lowest.map(|l| l.1),
        cells: table.len(),
        failed_cells: table.iter().filter(|c| c.elbo.is_none()).count(),
    };
    artifacts::write_json(&res.output_dir.join(artifacts::HYPEROPT_SUMMARY), &summary)?;
    Ok(summary)
}

/// Mean and sample standard deviation; the deviation of a single value is zero.
pub fn mean_std(values: &[f64]) -> Option<(f64, f64)> {
    if values.is_empty() {
        return None;
    }
    let n = values.len() as f64;
    let mean = values.iter().sum::<f64>() / n;
    let std = if values.len() > 1 {
        (values.iter().map(|v| (v - mean).powi(2)).sum::<f64>() / (n - 1.0)).sqrt()
    } else {
        0.0
    };
    Some((mean, std))
}

fn mean(values: impl Iterator<Item = f64>) -> Option<f64> {
    let v: Vec<f64> = values.collect();
    mean_std(&v).map(|m| m.0)
}

pub fn seed_dir(root: &Path, n: usize, m: usize, seed: u64) -> PathBuf {
    root.join(format!("N{n}_M{m}")).join(format!("seed_{seed}"))
}

/// Seeds run in ascending order so the aggregate does not depend on how they were listed.
pub fn run_batch(res: &Resolved) -> Result<Vec<AggregateRow>, CliError> {
    let reference = reference_for(res)?;
    let mut seed_rows = Vec::new();
    let mut aggregate = Vec::new();
    let mut first_error: Option<CliError> = None;
    for size in &res.sizes {
        let mut ok = Vec::new();
        for &seed in &res.seeds {
            let dir = seed_dir(&res.output_dir, size.n, size.m, seed);
            match solve_into(res, "batch", (size.n, size.m), seed, reference.as_ref(), false, &dir) {
                Ok(s) => {
                    log::info!("N = {}, M = {}, seed {seed}: linf {:?}, {} iterations", size.n, size.m, s.linf, s.iterations);
                    seed_rows.push(SeedRow {
                        n: size.n,
                        m: size.m,
                        seed,
                        status: "ok".into(),
                        linf: s.linf,
                        iterations: Some(s.iterations),
                        final_loss: Some(s.final_loss),
                        wall_time: Some(s.wall_time),
                    });
                    ok.push(s);
                }
                Err(e) => {
                    log::warn!("N = {}, M = {}, seed {seed} failed: {e}", size.n, size.m);
                    seed_rows.push(SeedRow {
                        n: size.n,
                        m: size.m,
                        seed,
                        status: e.to_string(),
                        linf: None,
                        iterations: None,
                        final_loss: None,
                        wall_time: None,
                    });
                    first_error.get_or_insert(e);
                }
            }
        }
        let linfs: Vec<f64> = ok.iter().filter_map(|s| s.linf).collect();
        let (mean_linf, std_linf) = match mean_std(&linfs) {
            Some((m, s)) => (Some(m), Some(s)),
            None => (None, None),
        };
        aggregate.push(AggregateRow {
            n: size.n,
            m: size.m,
            seeds_ok: ok.len(),
            seeds_failed: res.seeds.len() - ok.len(),
            mean_linf,
            std_linf,
            mean_iterations: mean(ok.iter().map(|s| s.iterations as f64)),
            mean_final_loss: mean(ok.iter().map(|s| s.final_loss)),
            mean_wall_time: mean(ok.iter().map(|s| s.wall_time)),
        });
    }
    if aggregate.iter().all(|r| r.seeds_ok == 0) {
        return Err(first_error.expect("a failed batch has an error"));
    }
    create_dir(&res.output_dir)?;
    artifacts::write_rows(&res.output_dir.join(artifacts::BATCH_SEEDS), &seed_rows)?;
    artifacts::write_rows(&res.output_dir.join(artifacts::BATCH_AGGREGATE), &aggregate)?;
    Ok(aggregate)
}
