//! Benchmark PDEs in reduced form: functional layouts, data, and the eliminated-variable map.

pub mod burgers;
pub mod elliptic;
pub mod mfg;
pub mod parabolic;

use std::fmt;

use faer::{Mat, MatRef};
use serde::{Deserialize, Serialize};

use crate::collocation::{
    build_functionals, sample_collocation, select_inducing, Domain, FunctionalVector, InducingSet, Layout, SampleSet,
};
use crate::error::{Result, SgpError};
use crate::kernel::KernelSpec;

/// Sparse matrix stored as per-row `(column, value)` lists.
#[derive(Clone, Debug, PartialEq)]
pub struct SparseJacobian {
    ncols: usize,
    rows: Vec<Vec<(usize, f64)>>,
}

impl SparseJacobian {
    pub fn new(nrows: usize, ncols: usize) -> Self {
        SparseJacobian {
            ncols,
            rows: vec![Vec::new(); nrows],
        }
    }

    pub fn nrows(&self) -> usize {
        self.rows.len()
    }

    pub fn ncols(&self) -> usize {
        self.ncols
    }

    pub fn push(&mut self, row: usize, col: usize, value: f64) {
        debug_assert!(col < self.ncols);
        self.rows[row].push((col, value));
    }

    pub fn row(&self, i: usize) -> &[(usize, f64)] {
        &self.rows[i]
    }

    /// Rows `start..start + len` as a new matrix.
    pub fn row_block(&self, start: usize, len: usize) -> SparseJacobian {
        SparseJacobian {
            ncols: self.ncols,
            rows: self.rows[start..start + len].to_vec(),
        }
    }

    pub fn dense(&self) -> Mat<f64> {
        let mut m = Mat::zeros(self.nrows(), self.ncols);
        for (i, r) in self.rows.iter().enumerate() {
            for &(j, v) in r {
                m[(i, j)] += v;
            }
        }
        m
    }

    /// `J x`
    pub fn mul_vec(&self, x: &[f64]) -> Vec<f64> {
        self.rows
            .iter()
            .map(|r| r.iter().map(|&(j, v)| v * x[j]).sum())
            .collect()
    }

    /// `J^T y`
    pub fn tmul_vec(&self, y: &[f64]) -> Vec<f64> {
        let mut out = vec![0.0; self.ncols];
        for (r, yi) in self.rows.iter().zip(y) {
            for &(j, v) in r {
                out[j] += v * yi;
            }
        }
        out
    }

    /// Adds `scale * diag(weights) J^T J` into `h`; `weights` of `None` means all ones.
    pub fn add_gram_to(&self, h: &mut Mat<f64>, scale: f64, weights: Option<&[f64]>) {
        for (i, r) in self.rows.iter().enumerate() {
            let w = scale * weights.map_or(1.0, |w| w[i]);
            for &(a, va) in r {
                for &(b, vb) in r {
                    h[(a, b)] += w * va * vb;
                }
            }
        }
    }

    pub fn transpose(&self) -> SparseJacobian {
        let mut t = SparseJacobian::new(self.ncols, self.nrows());
        for (i, r) in self.rows.iter().enumerate() {
            for &(j, v) in r {
                t.rows[j].push((i, v));
            }
        }
        t
    }

    /// Dense `C J` for a dense left factor `C`.
    pub fn left_mul(&self, c: MatRef<'_, f64>) -> Mat<f64> {
        assert_eq!(c.ncols(), self.nrows());
        let mut out = Mat::<f64>::zeros(c.nrows(), self.ncols);
        for (i, r) in self.rows.iter().enumerate() {
            let ci = c.col(i);
            for &(k, v) in r {
                let col = out.col_mut(k);
                for (o, x) in col.iter_mut().zip(ci.iter()) {
                    *o += v * x;
                }
            }
        }
        out
    }
}

/// The constraint set `F(z) = y` parameterized by free variables `w`.
pub trait EliminationMap: Send + Sync {
    fn free_dim(&self) -> usize;
    /// The stacked reduced variables; satisfies the eliminated constraints for every `w`.
    fn z_of_w(&self, w: &[f64]) -> Vec<f64>;
    fn jacobian(&self, w: &[f64]) -> SparseJacobian;
}

/// Residuals that enter the objective as weighted squares instead of being eliminated.
#[derive(Clone, Debug)]
pub struct SoftTerms {
    pub values: Vec<f64>,
    pub weights: Vec<f64>,
    pub jacobian: SparseJacobian,
}

impl SoftTerms {
    pub fn weighted_sum_sq(&self) -> f64 {
        self.values.iter().zip(&self.weights).map(|(r, w)| w * r * r).sum()
    }
}

/// `field_weight * sum_f z_f^T (gamma I + Q)^-1 z_f + sum_i weight_i r_i^2`
/// where `z` stacks one or more fields of length `field_len`.
pub trait ReducedObjective: EliminationMap {
    fn field_len(&self) -> usize;

    fn field_count(&self) -> usize {
        1
    }

    fn field_weight(&self) -> f64 {
        1.0
    }

    fn soft_terms(&self, _w: &[f64]) -> Option<SoftTerms> {
        None
    }

    /// `F(z) - y` for stacked reduced variables `z`; `w` supplies any extra unknowns.
    fn constraint_residuals(&self, w: &[f64], z: &[f64]) -> Vec<f64>;

    /// `dF/dz` at `z` when every constraint is eliminated exactly; `None` otherwise.
    fn constraint_jacobian(&self, _z: &[f64]) -> Option<SparseJacobian> {
        None
    }

    /// Free variables read back from reduced variables, inverting `z_of_w` on its range.
    fn free_part(&self, z: &[f64]) -> Vec<f64>;

    /// Default starting point.
    fn initial_guess(&self) -> Vec<f64> {
        vec![0.0; self.free_dim()]
    }
}

#[derive(Clone, Copy, Debug, PartialEq, Eq, Hash, Serialize, Deserialize)]
#[serde(rename_all = "snake_case")]
pub enum ProblemKind {
    Elliptic,
    Burgers,
    Parabolic,
    Mfg,
}

impl ProblemKind {
    pub fn name(self) -> &'static str {
        match self {
            ProblemKind::Elliptic => "elliptic",
            ProblemKind::Burgers => "burgers",
            ProblemKind::Parabolic => "parabolic",
            ProblemKind::Mfg => "mfg",
        }
    }
}

impl fmt::Display for ProblemKind {
    fn fmt(&self, f: &mut fmt::Formatter<'_>) -> fmt::Result {
        f.write_str(self.name())
    }
}

/// Sample sizes, kernel and seed shared by every problem constructor.
#[derive(Clone, Debug)]
pub struct Setup {
    pub n: usize,
    pub m: usize,
    pub interior_ratio: f64,
    pub kernel: KernelSpec,
    pub seed: u64,
}

/// A sampled problem instance.
#[derive(Clone, Debug)]
pub struct ProblemSpec {
    pub kind: ProblemKind,
    pub domain: Domain,
    pub kernel: KernelSpec,
    pub nu: Option<f64>,
    pub layout: Layout,
    pub samples: SampleSet,
    pub inducing: InducingSet,
    /// Functionals on all samples.
    pub psi: FunctionalVector,
    /// Functionals on the inducing points.
    pub phi: FunctionalVector,
}

pub struct Problem {
    pub spec: ProblemSpec,
    pub objective: Box<dyn ReducedObjective>,
}

impl fmt::Debug for Problem {
    fn fmt(&self, f: &mut fmt::Formatter<'_>) -> fmt::Result {
        f.debug_struct("Problem")
            .field("spec", &self.spec)
            .field("free_dim", &self.objective.free_dim())
            .finish()
    }
}

pub(crate) fn instantiate(
    kind: ProblemKind,
    domain: Domain,
    layout: Layout,
    setup: &Setup,
    nu: Option<f64>,
) -> Result<ProblemSpec> {
    setup.kernel.validate()?;
    setup.kernel.check_dim(domain.dim())?;
    if setup.m > setup.n {
        return Err(SgpError::InvalidArgument(format!(
            "M = {} inducing points exceeds N = {} samples",
            setup.m, setup.n
        )));
    }
    let samples = sample_collocation(&domain, setup.n, setup.interior_ratio, setup.seed)?;
    let inducing = select_inducing(&samples, setup.m, setup.interior_ratio, setup.seed)?;
    let psi = build_functionals(&layout, &samples);
    let phi = build_functionals(&layout, &samples.subset(&inducing));
    Ok(ProblemSpec {
        kind,
        domain,
        kernel: setup.kernel.clone(),
        nu,
        layout,
        samples,
        inducing,
        psi,
        phi,
    })
}

pub(crate) fn check_nu(nu: f64) -> Result<f64> {
    if nu > 0.0 && nu.is_finite() {
        Ok(nu)
    } else {
        Err(SgpError::InvalidArgument(format!("viscosity must be positive, got {nu}")))
    }
}
