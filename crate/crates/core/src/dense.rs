//! Thin sequential wrappers over faer so results do not depend on the thread pool.

use dyn_stack::{MemBuffer, MemStack};
use faer::linalg::cholesky::llt::factor::{cholesky_in_place, cholesky_in_place_scratch, LltRegularization};
use faer::linalg::matmul::matmul;
use faer::linalg::qr::no_pivoting::factor::{qr_in_place, qr_in_place_scratch, recommended_block_size};
use faer::linalg::triangular_solve::{solve_lower_triangular_in_place, solve_upper_triangular_in_place};
use faer::{Accum, Mat, MatMut, MatRef, Par};

/// Lower Cholesky factor with the strict upper triangle zeroed, or `None` if the
/// matrix is not numerically positive definite.
pub fn cholesky_lower(a: MatRef<'_, f64>) -> Option<Mat<f64>> {
    let n = a.nrows();
    let mut l = a.to_owned();
    let mut buf = MemBuffer::new(cholesky_in_place_scratch::<f64>(n, Par::Seq, Default::default()));
    let ok = cholesky_in_place(
        l.as_mut(),
        LltRegularization::default(),
        Par::Seq,
        MemStack::new(&mut buf),
        Default::default(),
    )
    .is_ok();
    if !ok {
        return None;
    }
    for j in 0..n {
        for i in 0..j {
            l[(i, j)] = 0.0;
        }
    }
    if (0..n).all(|i| l[(i, i)].is_finite() && l[(i, i)] > 0.0) {
        Some(l)
    } else {
        None
    }
}

/// Upper-triangular `R` (`ncols x ncols`) of a thin QR of a tall matrix.
pub fn qr_r(mut a: Mat<f64>) -> Mat<f64> {
    let (m, n) = (a.nrows(), a.ncols());
    assert!(m >= n);
    let bs = recommended_block_size::<f64>(m, n);
    let mut coeff = Mat::<f64>::zeros(bs, n);
    let mut buf = MemBuffer::new(qr_in_place_scratch::<f64>(m, n, bs, Par::Seq, Default::default()));
    qr_in_place(a.as_mut(), coeff.as_mut(), Par::Seq, MemStack::new(&mut buf), Default::default());
    Mat::from_fn(n, n, |i, j| if i <= j { a[(i, j)] } else { 0.0 })
}

/// Solves `U X = B` in place.
pub fn solve_upper(u: MatRef<'_, f64>, rhs: MatMut<'_, f64>) {
    solve_upper_triangular_in_place(u, rhs, Par::Seq);
}

/// `dst = alpha * lhs * rhs` or `dst += alpha * lhs * rhs`.
pub fn gemm(dst: MatMut<'_, f64>, accumulate: bool, lhs: MatRef<'_, f64>, rhs: MatRef<'_, f64>, alpha: f64) {
    let acc = if accumulate { Accum::Add } else { Accum::Replace };
    matmul(dst, acc, lhs, rhs, alpha, Par::Seq);
}

pub fn product(lhs: MatRef<'_, f64>, rhs: MatRef<'_, f64>) -> Mat<f64> {
    let mut out = Mat::zeros(lhs.nrows(), rhs.ncols());
    gemm(out.as_mut(), false, lhs, rhs, 1.0);
    out
}

/// Solves `L X = B` in place.
pub fn solve_lower(l: MatRef<'_, f64>, rhs: MatMut<'_, f64>) {
    solve_lower_triangular_in_place(l, rhs, Par::Seq);
}

/// Solves `L^T X = B` in place.
pub fn solve_lower_transpose(l: MatRef<'_, f64>, rhs: MatMut<'_, f64>) {
    solve_upper_triangular_in_place(l.transpose(), rhs, Par::Seq);
}

pub fn col_from(v: &[f64]) -> Mat<f64> {
    Mat::from_fn(v.len(), 1, |i, _| v[i])
}

pub fn col_to_vec(m: MatRef<'_, f64>) -> Vec<f64> {
    (0..m.nrows()).map(|i| m[(i, 0)]).collect()
}
