//! JSON run configuration and the per-problem defaults.

use std::path::{Path, PathBuf};

use serde::{Deserialize, Serialize};
use sgp_core::elbo::{sigma_grid, QuadCoefficient};
use sgp_core::gauss_newton::GNConfig;
use sgp_core::kernel::KernelSpec;
use sgp_core::pipeline::{validate_settings, InitStrategy, ProblemParams, SolverSettings};
use sgp_core::problems::{burgers, mfg, ProblemKind, Setup};

use crate::CliError;

/// Overrides `output_dir` when set.
pub const OUTPUT_DIR_ENV: &str = "SGP_OUTPUT_DIR";
pub const DEFAULT_OUTPUT_DIR: &str = "sgp_output";
pub const DEFAULT_GRID_RESOLUTION: usize = 60;
pub const DEFAULT_SEED: u64 = 1;
pub const DEFAULT_MAX_PSI: usize = 20_000;

#[derive(Clone, Debug, Default, PartialEq, Serialize, Deserialize)]
#[serde(deny_unknown_fields)]
pub struct GnSection {
    pub max_iter: Option<usize>,
    /// Step tolerance.
    pub tol: Option<f64>,
    pub step_size: Option<f64>,
    pub ridge: Option<f64>,
}

#[derive(Clone, Debug, PartialEq, Serialize, Deserialize)]
#[serde(deny_unknown_fields)]
pub struct HyperoptSection {
    #[serde(default = "default_low")]
    pub low: f64,
    #[serde(default = "default_high")]
    pub high: f64,
    #[serde(default = "default_step")]
    pub step: f64,
    /// Explicit grid; replaces `low`/`high`/`step` when present.
    pub values: Option<Vec<f64>>,
    #[serde(default)]
    pub quad_coefficient: QuadCoefficient,
}

fn default_low() -> f64 {
    0.01
}

fn default_high() -> f64 {
    1.0
}

fn default_step() -> f64 {
    0.01
}

impl Default for HyperoptSection {
    fn default() -> Self {
        HyperoptSection {
            low: default_low(),
            high: default_high(),
            step: default_step(),
            values: None,
            quad_coefficient: QuadCoefficient::One,
        }
    }
}

impl HyperoptSection {
    pub fn grid(&self) -> Result<Vec<f64>, CliError> {
        match &self.values {
            Some(v) if v.is_empty() => Err(CliError::Config("hyperopt.values is empty".into())),
            Some(v) if v.iter().any(|s| !(s.is_finite() && *s > 0.0)) => {
                Err(CliError::Config(format!("hyperopt.values must be positive, got {v:?}")))
            }
            Some(v) => Ok(v.clone()),
            None => Ok(sigma_grid(self.low, self.high, self.step)?),
        }
    }
}

#[derive(Clone, Debug, PartialEq, Serialize, Deserialize)]
#[serde(deny_unknown_fields)]
pub struct DiagnosticsSection {
    #[serde(default)]
    pub nystrom: bool,
    /// Largest `K(psi, psi)` side the dense diagnostics will assemble.
    #[serde(default = "default_max_psi")]
    pub max_psi: usize,
}

fn default_max_psi() -> usize {
    DEFAULT_MAX_PSI
}

impl Default for DiagnosticsSection {
    fn default() -> Self {
        DiagnosticsSection {
            nystrom: false,
            max_psi: DEFAULT_MAX_PSI,
        }
    }
}

#[derive(Clone, Copy, Debug, PartialEq, Eq, Serialize, Deserialize)]
#[serde(deny_unknown_fields)]
pub struct SizePair {
    #[serde(rename = "N")]
    pub n: usize,
    #[serde(rename = "M")]
    pub m: usize,
}

/// The config file as written by the user.
#[derive(Clone, Debug, PartialEq, Serialize, Deserialize)]
#[serde(deny_unknown_fields)]
pub struct RunConfig {
    pub problem: ProblemKind,
    #[serde(rename = "N")]
    pub n: usize,
    #[serde(rename = "M")]
    pub m: usize,
    pub interior_ratio: Option<f64>,
    pub kernel: Option<KernelSpec>,
    pub gamma: Option<f64>,
    pub eta: Option<f64>,
    pub nu: Option<f64>,
    pub seed: Option<u64>,
    pub seeds: Option<Vec<u64>>,
    /// Extra `(N, M)` rows for `batch`; the top-level pair is used when absent.
    pub sizes: Option<Vec<SizePair>>,
    #[serde(default)]
    pub gn: GnSection,
    pub init: Option<InitStrategy>,
    pub grid_resolution: Option<usize>,
    pub hyperopt: Option<HyperoptSection>,
    #[serde(default)]
    pub diagnostics: DiagnosticsSection,
    pub reference_file: Option<PathBuf>,
    pub output_dir: Option<PathBuf>,
}

/// Paper-scale defaults: `(gamma, eta, interior ratio, kernel)`.
pub fn problem_defaults(kind: ProblemKind) -> (f64, f64, f64, KernelSpec) {
    match kind {
        ProblemKind::Elliptic => (1e-12, 1e-12, 0.75, KernelSpec::gaussian_iso(0.2)),
        ProblemKind::Burgers => (1e-6, 1e-6, 5.0 / 6.0, KernelSpec::gaussian_aniso(vec![0.3, 0.05])),
        ProblemKind::Parabolic => (1e-10, 1e-10, 6.0 / 7.0, KernelSpec::gaussian_aniso(vec![0.3, 0.05])),
        ProblemKind::Mfg => (1e-10, 1e-4, 1.0, KernelSpec::periodic()),
    }
}

/// A config with every default filled in.
#[derive(Clone, Debug)]
pub struct Resolved {
    pub kind: ProblemKind,
    pub n: usize,
    pub m: usize,
    pub interior_ratio: f64,
    pub kernel: KernelSpec,
    pub nu: Option<f64>,
    pub settings: SolverSettings,
    pub seeds: Vec<u64>,
    pub sizes: Vec<SizePair>,
    pub resolution: usize,
    pub hyperopt: HyperoptSection,
    pub diagnostics: DiagnosticsSection,
    pub reference_file: Option<PathBuf>,
    pub output_dir: PathBuf,
}

impl Resolved {
    pub fn params(&self, n: usize, m: usize, seed: u64) -> ProblemParams {
        ProblemParams {
            kind: self.kind,
            setup: Setup {
                n,
                m,
                interior_ratio: self.interior_ratio,
                kernel: self.kernel.clone(),
                seed,
            },
            nu: self.nu,
        }
    }

    /// Seed used by single-run commands.
    pub fn first_seed(&self) -> u64 {
        self.seeds[0]
    }
}

pub fn load(path: &Path) -> Result<RunConfig, CliError> {
    let text = std::fs::read_to_string(path)
        .map_err(|e| CliError::Config(format!("cannot read config {}: {e}", path.display())))?;
    serde_json::from_str(&text).map_err(|e| CliError::Config(format!("{}: {e}", path.display())))
}

/// Fills defaults and checks everything that can be checked before solving.
/// Relative `reference_file` paths are taken from `base_dir`.
pub fn resolve(cfg: &RunConfig, base_dir: &Path) -> Result<Resolved, CliError> {
    let (gamma0, eta0, ratio0, kernel0) = problem_defaults(cfg.problem);
    let gamma = cfg.gamma.unwrap_or(gamma0);
    // A lone gamma also sets eta, except for the game whose nugget is set separately.
    let eta = cfg.eta.unwrap_or(match (cfg.problem, cfg.gamma) {
        (ProblemKind::Mfg, _) | (_, None) => eta0,
        (_, Some(g)) => g,
    });
    let interior_ratio = match cfg.problem {
        ProblemKind::Mfg => 1.0,
        _ => cfg.interior_ratio.unwrap_or(ratio0),
    };
    let kernel = cfg.kernel.clone().unwrap_or(kernel0);
    kernel.validate()?;
    let nu = match cfg.problem {
        ProblemKind::Burgers => Some(cfg.nu.unwrap_or(burgers::DEFAULT_NU)),
        ProblemKind::Mfg => Some(cfg.nu.unwrap_or(mfg::DEFAULT_NU)),
        _ => {
            if cfg.nu.is_some() {
                return Err(CliError::Config(format!("nu does not apply to the {} problem", cfg.problem.name())));
            }
            None
        }
    };
    let defaults = GNConfig::default();
    let gn = GNConfig {
        max_iter: cfg.gn.max_iter.unwrap_or(defaults.max_iter),
        step_tol: cfg.gn.tol.unwrap_or(defaults.step_tol),
        step_size: cfg.gn.step_size.unwrap_or(defaults.step_size),
        ridge: cfg.gn.ridge.unwrap_or(defaults.ridge),
    };
    let settings = SolverSettings {
        gamma,
        eta,
        gn,
        init: cfg.init.unwrap_or_default(),
        dense_psi: false,
    };
    validate_settings(&settings)?;

    let mut seeds = match (&cfg.seeds, cfg.seed) {
        (Some(_), Some(_)) => return Err(CliError::Config("give either seed or seeds, not both".into())),
        (Some(s), None) => s.clone(),
        (None, Some(s)) => vec![s],
        (None, None) => vec![DEFAULT_SEED],
    };
    if seeds.is_empty() {
        return Err(CliError::Config("seeds must not be empty".into()));
    }
    seeds.sort_unstable();
    seeds.dedup();

    let sizes = match &cfg.sizes {
        Some(s) if s.is_empty() => return Err(CliError::Config("sizes must not be empty".into())),
        Some(s) => s.clone(),
        None => vec![SizePair { n: cfg.n, m: cfg.m }],
    };
    for s in sizes.iter().chain(std::iter::once(&SizePair { n: cfg.n, m: cfg.m })) {
        if s.m == 0 || s.m > s.n {
            return Err(CliError::Config(format!("need 1 <= M <= N, got N = {}, M = {}", s.n, s.m)));
        }
    }

    let resolution = cfg.grid_resolution.unwrap_or(DEFAULT_GRID_RESOLUTION);
    if resolution < 2 {
        return Err(CliError::Config(format!("grid_resolution must be >= 2, got {resolution}")));
    }
    let hyperopt = cfg.hyperopt.clone().unwrap_or_default();
    hyperopt.grid()?;

    let output_dir = match std::env::var_os(OUTPUT_DIR_ENV) {
        Some(d) if !d.is_empty() => PathBuf::from(d),
        _ => cfg.output_dir.clone().unwrap_or_else(|| PathBuf::from(DEFAULT_OUTPUT_DIR)),
    };
    let reference_file = cfg.reference_file.as_ref().map(|p| {
        if p.is_relative() {
            base_dir.join(p)
        } else {
            p.clone()
        }
    });

    Ok(Resolved {
        kind: cfg.problem,
        n: cfg.n,
        m: cfg.m,
        interior_ratio,
        kernel,
        nu,
        settings,
        seeds,
        sizes,
        resolution,
        hyperopt,
        diagnostics: cfg.diagnostics.clone(),
        reference_file,
        output_dir,
    })
}
