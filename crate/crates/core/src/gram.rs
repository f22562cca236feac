//! Gram matrices of functional vectors, the block nugget, and the factor of `Theta + eta R`.

use faer::{Mat, MatRef};
use rayon::prelude::*;

use crate::collocation::{BlockRange, FunctionalVector};
use crate::dense::cholesky_lower;
use crate::error::{Result, SgpError};
use crate::kernel::{pair_value, validate_functionals, KernelSpec};

/// Attempts made by [`cholesky_theta`] after the first, each with ten times the nugget.
pub const ETA_ESCALATIONS: usize = 3;

/// Column-major fill; every entry is computed independently so thread count cannot
/// change the result.
fn fill_columns(nrows: usize, ncols: usize, f: impl Fn(usize, usize) -> f64 + Sync) -> Vec<f64> {
    let mut data = vec![0.0; nrows * ncols];
    if nrows == 0 {
        return data;
    }
    data.par_chunks_mut(nrows).enumerate().for_each(|(j, col)| {
        for (i, v) in col.iter_mut().enumerate() {
            *v = f(i, j);
        }
    });
    data
}

/// `Theta[i][j] = [phi_i, K phi_j]`, exactly symmetric.
pub fn assemble_theta(kernel: &KernelSpec, phi: &FunctionalVector) -> Result<Mat<f64>> {
    if phi.is_empty() {
        return Err(SgpError::InvalidArgument("empty functional vector".into()));
    }
    validate_functionals(kernel, &phi.entries)?;
    let n = phi.len();
    let e = &phi.entries;
    let upper = fill_columns(n, n, |i, j| {
        if i <= j {
            pair_value(kernel, &e[i].point, &e[i].op, &e[j].point, &e[j].op)
        } else {
            0.0
        }
    });
    Ok(Mat::from_fn(n, n, |i, j| {
        if i <= j {
            upper[i + j * n]
        } else {
            upper[j + i * n]
        }
    }))
}

/// `B[i][j] = [phi_i, K psi_j]`.
pub fn assemble_cross(kernel: &KernelSpec, phi: &FunctionalVector, psi: &FunctionalVector) -> Result<Mat<f64>> {
    validate_functionals(kernel, phi.entries.iter().chain(&psi.entries))?;
    let (r, c) = (phi.len(), psi.len());
    let (a, b) = (&phi.entries, &psi.entries);
    let data = fill_columns(r, c, |i, j| {
        pair_value(kernel, &a[i].point, &a[i].op, &b[j].point, &b[j].op)
    });
    Ok(Mat::from_fn(r, c, |i, j| data[i + j * r]))
}

/// Diagonal of `K(psi, psi)`.
pub fn psi_diagonal(kernel: &KernelSpec, psi: &FunctionalVector) -> Result<Vec<f64>> {
    validate_functionals(kernel, &psi.entries)?;
    Ok(psi
        .entries
        .par_iter()
        .map(|f| pair_value(kernel, &f.point, &f.op, &f.point, &f.op))
        .collect())
}

/// Gram blocks for one problem instance.
pub struct GramBlocks {
    pub theta: Mat<f64>,
    pub cross: Mat<f64>,
    pub psi_diag: Vec<f64>,
    /// Full `K(psi, psi)`; only assembled for diagnostics.
    pub dense_psi: Option<Mat<f64>>,
}

pub fn assemble_blocks(
    kernel: &KernelSpec,
    phi: &FunctionalVector,
    psi: &FunctionalVector,
    with_dense_psi: bool,
) -> Result<GramBlocks> {
    Ok(GramBlocks {
        theta: assemble_theta(kernel, phi)?,
        cross: assemble_cross(kernel, phi, psi)?,
        psi_diag: psi_diagonal(kernel, psi)?,
        dense_psi: if with_dense_psi {
            Some(assemble_theta(kernel, psi)?)
        } else {
            None
        },
    })
}

/// `eta * R` with `R` diagonal and constant on each operator block.
#[derive(Clone, Debug, PartialEq)]
pub struct NuggetSpec {
    pub eta: f64,
    pub block_scales: Vec<f64>,
    pub block_lens: Vec<usize>,
}

impl NuggetSpec {
    /// Diagonal of `R`.
    pub fn scale_diagonal(&self) -> Vec<f64> {
        self.block_scales
            .iter()
            .zip(&self.block_lens)
            .flat_map(|(&s, &n)| std::iter::repeat_n(s, n))
            .collect()
    }
}

/// Scales each block by the mean of `Theta`'s diagonal over it.
pub fn build_nugget(theta: MatRef<'_, f64>, blocks: &[BlockRange], eta: f64) -> Result<NuggetSpec> {
    if !(eta >= 0.0 && eta.is_finite()) {
        return Err(SgpError::InvalidArgument(format!("nugget eta must be >= 0, got {eta}")));
    }
    let mut next = 0;
    for b in blocks {
        if b.start != next {
            return Err(SgpError::InvalidArgument(format!(
                "block '{}' starts at {} but previous block ends at {next}",
                b.label, b.start
            )));
        }
        next += b.len;
    }
    if next != theta.nrows() {
        return Err(SgpError::InvalidArgument(format!(
            "blocks cover {next} rows of a {}x{} Gram matrix",
            theta.nrows(),
            theta.ncols()
        )));
    }
    let block_scales = blocks
        .iter()
        .map(|b| {
            if b.len == 0 {
                return 1.0;
            }
            let sum: f64 = (b.start..b.start + b.len).map(|i| theta[(i, i)]).sum();
            (sum / b.len as f64).max(1e-300)
        })
        .collect();
    Ok(NuggetSpec {
        eta,
        block_scales,
        block_lens: blocks.iter().map(|b| b.len).collect(),
    })
}

/// Lower Cholesky factor of `Theta + eta_used * R`.
#[derive(Clone, Debug)]
pub struct CholeskyFactor {
    pub lower: Mat<f64>,
    pub eta_used: f64,
}

/// Factors `Theta + eta R`, multiplying `eta` by ten up to [`ETA_ESCALATIONS`] times on failure.
pub fn cholesky_theta(theta: MatRef<'_, f64>, nugget: &NuggetSpec) -> Result<CholeskyFactor> {
    let n = theta.nrows();
    let scales = nugget.scale_diagonal();
    if scales.len() != n || theta.ncols() != n {
        return Err(SgpError::InvalidArgument(format!(
            "nugget covers {} entries of a {}x{} matrix",
            scales.len(),
            n,
            theta.ncols()
        )));
    }
    let mut eta = nugget.eta;
    for attempt in 0..=ETA_ESCALATIONS {
        let mut m = theta.to_owned();
        for (i, s) in scales.iter().enumerate() {
            m[(i, i)] += eta * s;
        }
        if let Some(lower) = cholesky_lower(m.as_ref()) {
            if attempt > 0 {
                log::warn!("Theta factorized after raising eta to {eta:e}");
            }
            return Ok(CholeskyFactor { lower, eta_used: eta });
        }
        if attempt < ETA_ESCALATIONS {
            eta *= 10.0;
        }
    }
    Err(SgpError::NumericalFailure(format!(
        "Theta + eta R is not positive definite even with eta = {eta:e}"
    )))
}
