//! Factorized action of `(gamma I + Q)^-1` with `Q = B^T (Theta + eta R)^-1 B`.

use faer::{Mat, MatRef};

use crate::dense::{cholesky_lower, col_from, qr_r, col_to_vec, gemm, product, solve_lower, solve_lower_transpose};
use crate::error::{Result, SgpError};
use crate::gram::CholeskyFactor;

/// `A = gamma^-1/2 L^-1 B` and the Cholesky factor `J` of `I + A A^T`.
///
/// `C = J^-1 A` is kept alongside so that every application is two products,
/// `(gamma I + Q)^-1 v = (v - C^T C v) / gamma`.
#[derive(Clone, Debug)]
pub struct LowRankInverse {
    a: Mat<f64>,
    j: Mat<f64>,
    c: Mat<f64>,
    gamma: f64,
}

pub fn factorize(l_factor: &CholeskyFactor, cross: MatRef<'_, f64>, gamma: f64) -> Result<LowRankInverse> {
    if !(gamma > 0.0 && gamma.is_finite()) {
        return Err(SgpError::InvalidArgument(format!("gamma must be positive, got {gamma}")));
    }
    let l = l_factor.lower.as_ref();
    if l.nrows() != cross.nrows() {
        return Err(SgpError::InvalidArgument(format!(
            "cross matrix has {} rows but the factor is {}x{}",
            cross.nrows(),
            l.nrows(),
            l.ncols()
        )));
    }
    let r = cross.nrows();
    let mut a = cross.to_owned();
    solve_lower(l, a.as_mut());
    let s = gamma.powf(-0.5);
    a.col_iter_mut().for_each(|c| c.iter_mut().for_each(|x| *x *= s));
    if a.col_iter().any(|c| c.iter().any(|x| !x.is_finite())) {
        return Err(SgpError::NumericalFailure("non-finite entries in A".into()));
    }

    let mut inner = Mat::<f64>::identity(r, r);
    gemm(inner.as_mut(), true, a.as_ref(), a.transpose(), 1.0);
    let j = match cholesky_lower(inner.as_ref()) {
        Some(j) => j,
        None => {
            log::debug!("I + A A^T lost definiteness in rounding; factoring [A^T; I] instead");
            drop(inner);
            stacked_factor(a.as_ref())?
        }
    };
    let mut c = a.clone();
    solve_lower(j.as_ref(), c.as_mut());
    Ok(LowRankInverse { a, j, c, gamma })
}

/// Lower `J` with `J J^T = I + A A^T` from the QR of `[A^T; I]`, which never forms `A A^T`.
fn stacked_factor(a: MatRef<'_, f64>) -> Result<Mat<f64>> {
    let (r, n) = (a.nrows(), a.ncols());
    let stacked = Mat::from_fn(n + r, r, |i, j| {
        if i < n {
            a[(j, i)]
        } else if i - n == j {
            1.0
        } else {
            0.0
        }
    });
    let upper = qr_r(stacked);
    let j = Mat::from_fn(r, r, |i, k| {
        let d = upper[(k, k)];
        if d < 0.0 {
            -upper[(k, i)]
        } else {
            upper[(k, i)]
        }
    });
    if (0..r).all(|i| j[(i, i)].is_finite() && j[(i, i)] > 0.0) {
        Ok(j)
    } else {
        Err(SgpError::NumericalFailure("I + A A^T failed to factorize".into()))
    }
}

impl LowRankInverse {
    pub fn gamma(&self) -> f64 {
        self.gamma
    }

    /// Length `n` of the vectors the operator acts on.
    pub fn n(&self) -> usize {
        self.a.ncols()
    }

    /// Number of inducing functionals.
    pub fn rank(&self) -> usize {
        self.a.nrows()
    }

    pub fn a_matrix(&self) -> MatRef<'_, f64> {
        self.a.as_ref()
    }

    pub fn inner_chol(&self) -> MatRef<'_, f64> {
        self.j.as_ref()
    }

    /// `J^-1 A`.
    pub fn c_matrix(&self) -> MatRef<'_, f64> {
        self.c.as_ref()
    }

    fn check_len(&self, len: usize) -> Result<()> {
        if len != self.n() {
            return Err(SgpError::InvalidArgument(format!(
                "vector of length {len}, operator acts on length {}",
                self.n()
            )));
        }
        Ok(())
    }

    /// `C v`, the shared ingredient of every other query.
    pub fn project(&self, v: &[f64]) -> Result<Vec<f64>> {
        self.check_len(v.len())?;
        Ok(col_to_vec(product(self.c.as_ref(), col_from(v).as_ref()).as_ref()))
    }

    pub fn apply_inverse(&self, v: &[f64]) -> Result<Vec<f64>> {
        let cv = self.project(v)?;
        let back = product(self.c.transpose(), col_from(&cv).as_ref());
        Ok(v.iter()
            .enumerate()
            .map(|(i, x)| (x - back[(i, 0)]) / self.gamma)
            .collect())
    }

    /// Same as [`Self::apply_inverse`] on each column.
    pub fn apply_inverse_mat(&self, v: MatRef<'_, f64>) -> Result<Mat<f64>> {
        self.check_len(v.nrows())?;
        let cv = product(self.c.as_ref(), v);
        let mut out = v.to_owned();
        gemm(out.as_mut(), true, self.c.transpose(), cv.as_ref(), -1.0);
        out.col_iter_mut().for_each(|c| c.iter_mut().for_each(|x| *x /= self.gamma));
        Ok(out)
    }

    /// `z^T (gamma I + Q)^-1 z`.
    pub fn quad_form(&self, z: &[f64]) -> Result<f64> {
        Ok(self.quad_and_inverse(z)?.0)
    }

    /// Quadratic form together with `(gamma I + Q)^-1 z`.
    ///
    /// The form is summed as `(|z - C^T C z|^2 + |J^-T C z|^2) / gamma`, two nonnegative
    /// terms, instead of the cancelling `(|z|^2 - |C z|^2) / gamma`.
    pub fn quad_and_inverse(&self, z: &[f64]) -> Result<(f64, Vec<f64>)> {
        let cz = col_from(&self.project(z)?);
        let back = product(self.c.transpose(), cz.as_ref());
        let resid: Vec<f64> = z.iter().enumerate().map(|(i, x)| x - back[(i, 0)]).collect();
        let mut t = cz;
        solve_lower_transpose(self.j.as_ref(), t.as_mut());
        let quad = (resid.iter().map(|r| r * r).sum::<f64>() + t.squared_norm_l2()) / self.gamma;
        Ok((quad, resid.into_iter().map(|r| r / self.gamma).collect()))
    }

    /// `log det(gamma I + Q)`.
    pub fn log_det(&self) -> f64 {
        let n = self.n() as f64;
        n * self.gamma.ln() + 2.0 * (0..self.rank()).map(|i| self.j[(i, i)].ln()).sum::<f64>()
    }

    /// `Tr K(psi, psi) - Tr Q`.
    pub fn trace_correction(&self, psi_diag: &[f64]) -> Result<f64> {
        self.check_len(psi_diag.len())?;
        let tr_k: f64 = psi_diag.iter().sum();
        Ok(tr_k - self.gamma * self.a.squared_norm_l2())
    }
}
