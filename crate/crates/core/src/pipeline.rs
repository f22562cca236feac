//! End-to-end solve: sample, assemble, factor, run Gauss-Newton, build the representer.

use std::path::Path;
use std::time::Instant;

use rand::SeedableRng;
use rand_chacha::ChaCha20Rng;
use rand_distr::{Distribution, StandardNormal};
use serde::{Deserialize, Serialize};

use crate::elbo::{elbo_terms, CellOutcome, ElboTerms, QuadCoefficient};
use crate::error::{Result, SgpError};
use crate::gauss_newton::{build_solution, solve, GNConfig, GNResult, SolutionModel};
use crate::gram::{assemble_cross, assemble_theta, build_nugget, cholesky_theta, psi_diagonal, CholeskyFactor, NuggetSpec};
use crate::kernel::KernelSpec;
use crate::problems::{burgers, elliptic, mfg, parabolic, Problem, ProblemKind, ProblemSpec, Setup};
use crate::reference::{
    cole_hopf_with, gauss_hermite, ingest_reference_grid, linf_on_grid, GridField, ReferenceGrid, COLE_HOPF_NODES,
};
use crate::woodbury::{factorize, LowRankInverse};

/// Everything needed to construct one problem instance.
#[derive(Clone, Debug)]
pub struct ProblemParams {
    pub kind: ProblemKind,
    pub setup: Setup,
    /// Viscosity for Burgers and the mean field game.
    pub nu: Option<f64>,
}

impl ProblemParams {
    pub fn build(&self, gamma: f64) -> Result<Problem> {
        match self.kind {
            ProblemKind::Elliptic => elliptic::elliptic_problem(&self.setup),
            ProblemKind::Burgers => burgers::burgers_problem(&self.setup, self.nu.unwrap_or(burgers::DEFAULT_NU)),
            ProblemKind::Parabolic => parabolic::parabolic_problem(&self.setup),
            ProblemKind::Mfg => mfg::mfg_problem(&self.setup, self.nu.unwrap_or(mfg::DEFAULT_NU), gamma),
        }
    }

    pub fn with_kernel(&self, kernel: KernelSpec) -> ProblemParams {
        let mut p = self.clone();
        p.setup.kernel = kernel;
        p
    }
}

#[derive(Clone, Copy, Debug, Default, PartialEq, Serialize, Deserialize)]
#[serde(tag = "type", rename_all = "snake_case")]
pub enum InitStrategy {
    /// The problem's default starting point.
    #[default]
    Default,
    /// Independent standard normal draws.
    Normal { seed: u64 },
}

#[derive(Clone, Debug)]
pub struct SolverSettings {
    pub gamma: f64,
    pub eta: f64,
    pub gn: GNConfig,
    pub init: InitStrategy,
    /// Keep the dense `K(psi, psi)` for diagnostics.
    pub dense_psi: bool,
}

/// Factored Gram data for one instance.
pub struct Assembly {
    pub psi_diag: Vec<f64>,
    pub dense_psi: Option<faer::Mat<f64>>,
    pub nugget: NuggetSpec,
    pub factor: CholeskyFactor,
    pub lri: LowRankInverse,
}

pub fn assemble(spec: &ProblemSpec, gamma: f64, eta: f64, dense_psi: bool) -> Result<Assembly> {
    let theta = assemble_theta(&spec.kernel, &spec.phi)?;
    let nugget = build_nugget(theta.as_ref(), &spec.phi.blocks, eta)?;
    let factor = cholesky_theta(theta.as_ref(), &nugget)?;
    drop(theta);
    let cross = assemble_cross(&spec.kernel, &spec.phi, &spec.psi)?;
    let lri = factorize(&factor, cross.as_ref(), gamma)?;
    drop(cross);
    Ok(Assembly {
        psi_diag: psi_diagonal(&spec.kernel, &spec.psi)?,
        dense_psi: if dense_psi {
            Some(assemble_theta(&spec.kernel, &spec.psi)?)
        } else {
            None
        },
        nugget,
        factor,
        lri,
    })
}

pub struct Solved {
    pub problem: Problem,
    pub assembly: Assembly,
    pub gn: GNResult,
    /// One representer per GP field; the mean field game has `u` then `m`.
    pub models: Vec<SolutionModel>,
    pub wall_time: f64,
}

impl Solved {
    /// Model compared against the reference: `m` for the mean field game, `u` otherwise.
    pub fn primary_model(&self) -> &SolutionModel {
        match self.problem.spec.kind {
            ProblemKind::Mfg => &self.models[1],
            _ => &self.models[0],
        }
    }

    pub fn elbo_terms(&self, coef: QuadCoefficient) -> Result<ElboTerms> {
        let obj = &self.problem.objective;
        let mut total: Option<ElboTerms> = None;
        for f in 0..obj.field_count() {
            let t = elbo_terms(self.gn.field(obj.as_ref(), f), &self.assembly.lri, &self.assembly.psi_diag, coef)?;
            total = Some(match total {
                None => t,
                Some(acc) => ElboTerms {
                    constant: acc.constant + t.constant,
                    log_det: acc.log_det + t.log_det,
                    quad: acc.quad + t.quad,
                    trace: acc.trace + t.trace,
                },
            });
        }
        Ok(total.expect("at least one field"))
    }

    /// Sup-norm of `F(z) - y` at the optimum.
    pub fn constraint_residual(&self) -> f64 {
        sup(&self.problem.objective.constraint_residuals(&self.gn.w, &self.gn.z))
    }

    /// Sum of squares of `F(z) - y` at the optimum.
    pub fn residual_sq(&self) -> f64 {
        self.problem
            .objective
            .constraint_residuals(&self.gn.w, &self.gn.z)
            .iter()
            .map(|r| r * r)
            .sum()
    }

    /// Sup-norm of `F(psi(u)) - y` for the returned functions, with `psi(u) = z - gamma Sigma^-1 z`.
    pub fn collocation_residual(&self) -> Result<f64> {
        let obj = &self.problem.objective;
        let g = self.assembly.lri.gamma();
        let mut fitted = Vec::with_capacity(self.gn.z.len());
        for f in 0..obj.field_count() {
            let zf = self.gn.field(obj.as_ref(), f);
            let s = self.assembly.lri.apply_inverse(zf)?;
            fitted.extend(zf.iter().zip(&s).map(|(z, s)| z - g * s));
        }
        Ok(sup(&obj.constraint_residuals(&self.gn.w, &fitted)))
    }
}

fn sup(v: &[f64]) -> f64 {
    v.iter().fold(0.0, |m, x| m.max(x.abs()))
}

fn initial_point(problem: &Problem, init: InitStrategy) -> Vec<f64> {
    match init {
        InitStrategy::Default => problem.objective.initial_guess(),
        InitStrategy::Normal { seed } => {
            let mut rng = ChaCha20Rng::seed_from_u64(seed);
            (0..problem.objective.free_dim())
                .map(|_| StandardNormal.sample(&mut rng))
                .collect()
        }
    }
}

pub fn solve_problem(problem: Problem, settings: &SolverSettings) -> Result<Solved> {
    let start = Instant::now();
    let assembly = assemble(&problem.spec, settings.gamma, settings.eta, settings.dense_psi)?;
    let w0 = initial_point(&problem, settings.init);
    let gn = solve(problem.objective.as_ref(), &assembly.lri, &settings.gn, &w0)?;
    let obj = problem.objective.as_ref();
    let models = (0..obj.field_count())
        .map(|f| {
            build_solution(
                gn.field(obj, f),
                &assembly.lri,
                &assembly.factor,
                &problem.spec.kernel,
                &problem.spec.phi,
            )
        })
        .collect::<Result<Vec<_>>>()?;
    Ok(Solved {
        problem,
        assembly,
        gn,
        models,
        wall_time: start.elapsed().as_secs_f64(),
    })
}

pub fn run(params: &ProblemParams, settings: &SolverSettings) -> Result<Solved> {
    solve_problem(params.build(settings.gamma)?, settings)
}

/// Ground truth used for grid errors.
#[derive(Clone, Debug)]
pub enum Reference {
    Analytic(fn(&[f64]) -> f64),
    ColeHopf { nu: f64, rule: (Vec<f64>, Vec<f64>) },
    Grid(ReferenceGrid),
}

impl Reference {
    pub fn eval(&self, p: &[f64]) -> Result<f64> {
        match self {
            Reference::Analytic(f) => Ok(f(p)),
            Reference::ColeHopf { nu, rule } => cole_hopf_with(rule, p[0], p[1], *nu),
            Reference::Grid(g) => Ok(g.eval(p)),
        }
    }

    /// The built-in reference for a problem, or the grid file when one is given.
    pub fn for_problem(kind: ProblemKind, nu: Option<f64>, file: Option<&Path>) -> Result<Option<Reference>> {
        if let Some(path) = file {
            return Ok(Some(Reference::Grid(ingest_reference_grid(path)?)));
        }
        Ok(match kind {
            ProblemKind::Elliptic => Some(Reference::Analytic(elliptic::exact_solution)),
            ProblemKind::Parabolic => Some(Reference::Analytic(parabolic::exact_solution)),
            ProblemKind::Burgers => Some(Reference::ColeHopf {
                nu: nu.unwrap_or(burgers::DEFAULT_NU),
                rule: gauss_hermite(COLE_HOPF_NODES),
            }),
            ProblemKind::Mfg => None,
        })
    }
}

/// Grid error of the primary model against `reference`.
pub fn grid_error(solved: &Solved, reference: &Reference, resolution: usize) -> Result<(f64, GridField)> {
    let model = solved.primary_model();
    linf_on_grid(|p| model.evaluate(p), |p| reference.eval(p), &solved.problem.spec.domain, resolution)
}

/// Kernel for one hyperparameter cell: the isotropic lengthscale itself, or a multiplier on fixed base lengthscales.
pub fn kernel_for_cell(base: &KernelSpec, sigma: f64) -> KernelSpec {
    match base {
        KernelSpec::GaussianIso { .. } => KernelSpec::gaussian_iso(sigma),
        other => other.scaled(sigma),
    }
}

/// Solves at one lengthscale and reports the bound at the optimum.
pub fn hyperopt_cell(
    params: &ProblemParams,
    settings: &SolverSettings,
    sigma: f64,
    reference: Option<&Reference>,
    resolution: usize,
    coef: QuadCoefficient,
) -> Result<CellOutcome> {
    let p = params.with_kernel(kernel_for_cell(&params.setup.kernel, sigma));
    let solved = run(&p, settings)?;
    let linf = match reference {
        Some(r) => Some(grid_error(&solved, r, resolution)?.0),
        None => None,
    };
    Ok(CellOutcome {
        elbo: solved.elbo_terms(coef)?.total(),
        iterations: solved.gn.iterations,
        linf,
    })
}

/// Rejects inputs the solver cannot use before any work starts.
pub fn validate_settings(settings: &SolverSettings) -> Result<()> {
    if !(settings.gamma > 0.0 && settings.gamma.is_finite()) {
        return Err(SgpError::InvalidConfiguration(format!("gamma must be positive, got {}", settings.gamma)));
    }
    if !(settings.eta >= 0.0 && settings.eta.is_finite()) {
        return Err(SgpError::InvalidConfiguration(format!("eta must be >= 0, got {}", settings.eta)));
    }
    settings.gn.validate()
}
