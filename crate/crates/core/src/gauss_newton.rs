//! Gauss-Newton on the eliminated variables and the representer-form solution.

use faer::Mat;
use rayon::prelude::*;
use serde::{Deserialize, Serialize};

use crate::collocation::FunctionalVector;
use crate::dense::{
    cholesky_lower, col_from, col_to_vec, gemm, product, qr_r, solve_lower, solve_lower_transpose, solve_upper,
};
use crate::error::{Result, SgpError};
use crate::gram::CholeskyFactor;
use crate::kernel::{pair_value, KernelSpec, IDENTITY};
use crate::problems::{ReducedObjective, SparseJacobian};
use crate::woodbury::LowRankInverse;

/// Ridge escalations attempted after the first normal-matrix factorization fails.
pub const RIDGE_ESCALATIONS: usize = 3;

#[derive(Clone, Debug, PartialEq, Serialize, Deserialize)]
#[serde(default)]
pub struct GNConfig {
    pub max_iter: usize,
    /// Stop once the sup-norm of the applied step falls below this.
    pub step_tol: f64,
    pub step_size: f64,
    pub ridge: f64,
}

impl Default for GNConfig {
    fn default() -> Self {
        GNConfig {
            max_iter: 20,
            step_tol: 1e-5,
            step_size: 1.0,
            ridge: 1e-10,
        }
    }
}

impl GNConfig {
    pub fn validate(&self) -> Result<()> {
        if self.max_iter == 0 {
            return Err(SgpError::InvalidConfiguration("gn.max_iter must be >= 1".into()));
        }
        if !(self.step_tol > 0.0) {
            return Err(SgpError::InvalidConfiguration("gn.tol must be positive".into()));
        }
        if !(self.step_size > 0.0 && self.step_size <= 1.0) {
            return Err(SgpError::InvalidConfiguration("gn.step_size must lie in (0, 1]".into()));
        }
        if !(self.ridge >= 0.0 && self.ridge.is_finite()) {
            return Err(SgpError::InvalidConfiguration("gn.ridge must be >= 0".into()));
        }
        Ok(())
    }
}

#[derive(Clone, Debug)]
pub struct GNResult {
    pub w: Vec<f64>,
    pub z: Vec<f64>,
    /// Objective at the starting point followed by its value after every step.
    pub loss_history: Vec<f64>,
    pub iterations: usize,
    pub converged: bool,
    /// The loss rose on three consecutive steps at some point.
    pub non_monotone: bool,
    /// Sup-norm of the objective gradient (halved) at the returned iterate.
    pub gradient_norm: f64,
}

impl GNResult {
    pub fn final_loss(&self) -> f64 {
        *self.loss_history.last().expect("loss history is never empty")
    }

    /// Reduced variables of field `f`.
    pub fn field<'a>(&'a self, obj: &dyn ReducedObjective, f: usize) -> &'a [f64] {
        let n = obj.field_len();
        &self.z[f * n..(f + 1) * n]
    }
}

/// Objective value and gradient half at one iterate.
struct Linearization {
    loss: f64,
    grad: Vec<f64>,
}

fn check_dims(obj: &dyn ReducedObjective, lri: &LowRankInverse) -> Result<()> {
    if obj.field_len() != lri.n() {
        return Err(SgpError::InvalidArgument(format!(
            "objective fields have length {} but the inverse acts on length {}",
            obj.field_len(),
            lri.n()
        )));
    }
    Ok(())
}

/// Loss and `Sigma^-1 z_f` for every field.
fn evaluate(obj: &dyn ReducedObjective, lri: &LowRankInverse, w: &[f64], z: &[f64]) -> Result<(f64, Vec<Vec<f64>>)> {
    let n = obj.field_len();
    let wf = obj.field_weight();
    let mut loss = 0.0;
    let mut sinv = Vec::with_capacity(obj.field_count());
    for f in 0..obj.field_count() {
        let (q, s) = lri.quad_and_inverse(&z[f * n..(f + 1) * n])?;
        loss += wf * q;
        sinv.push(s);
    }
    if let Some(soft) = obj.soft_terms(w) {
        loss += soft.weighted_sum_sq();
    }
    Ok((loss, sinv))
}

fn linearize(obj: &dyn ReducedObjective, lri: &LowRankInverse, w: &[f64]) -> Result<Linearization> {
    let z = obj.z_of_w(w);
    let (loss, sinv) = evaluate(obj, lri, w, &z)?;
    let jac = obj.jacobian(w);
    let n = obj.field_len();
    let wf = obj.field_weight();
    let mut grad = vec![0.0; obj.free_dim()];
    for (f, s) in sinv.iter().enumerate() {
        let g = jac.row_block(f * n, n).tmul_vec(s);
        grad.iter_mut().zip(g).for_each(|(a, b)| *a += wf * b);
    }
    if let Some(soft) = obj.soft_terms(w) {
        let wr: Vec<f64> = soft.values.iter().zip(&soft.weights).map(|(r, c)| r * c).collect();
        grad.iter_mut().zip(soft.jacobian.tmul_vec(&wr)).for_each(|(a, b)| *a += b);
    }
    Ok(Linearization { loss, grad })
}

/// Dense Gauss-Newton normal matrix at `w`.
fn normal_matrix(obj: &dyn ReducedObjective, lri: &LowRankInverse, w: &[f64]) -> Mat<f64> {
    let p = obj.free_dim();
    let n = obj.field_len();
    let jac = obj.jacobian(w);
    let scale = obj.field_weight() / lri.gamma();
    let mut h = Mat::<f64>::zeros(p, p);
    for f in 0..obj.field_count() {
        let jf = jac.row_block(f * n, n);
        jf.add_gram_to(&mut h, scale, None);
        let cj = jf.left_mul(lri.c_matrix());
        gemm(h.as_mut(), true, cj.transpose(), cj.as_ref(), -scale);
    }
    if let Some(soft) = obj.soft_terms(w) {
        soft.jacobian.add_gram_to(&mut h, 1.0, Some(&soft.weights));
    }
    h
}

/// Solves `(H + ridge I) d = -g`, raising the ridge tenfold on failure.
fn newton_step(mut h: Mat<f64>, grad: &[f64], ridge: f64) -> Result<Vec<f64>> {
    let p = grad.len();
    let scale = (0..p).map(|i| h[(i, i)].abs()).fold(0.0, f64::max).max(1.0);
    let mut added = 0.0;
    let mut r = ridge;
    for attempt in 0..=RIDGE_ESCALATIONS {
        for i in 0..p {
            h[(i, i)] += r - added;
        }
        added = r;
        if let Some(l) = cholesky_lower(h.as_ref()) {
            if attempt > 0 {
                log::warn!("normal matrix factorized with ridge {r:e}");
            }
            let mut x = col_from(grad);
            solve_lower(l.as_ref(), x.as_mut());
            solve_lower_transpose(l.as_ref(), x.as_mut());
            return Ok(col_to_vec(x.as_ref()).into_iter().map(|v| -v).collect());
        }
        r = if r > 0.0 { r * 10.0 } else { 1e-12 * scale };
    }
    Err(SgpError::NumericalFailure(format!(
        "Gauss-Newton normal matrix is not positive definite even with ridge {:e}",
        added
    )))
}

/// The same step through the linearized constraints `G = dF/dz`.
///
/// `J delta` ranges over the null space of `G`, so the new reduced vector is the
/// minimizer of `y^T Sigma^-1 y` subject to `G y = G z`, i.e.
/// `y = Sigma G^T (G Sigma G^T)^-1 G z`. With `Sigma = gamma (I + A^T A)` this is the
/// minimum-norm solution of `[G, G A^T] x = G z` mapped through `[I, A^T]`, solved
/// with the triangular factor of a QR of `[G^T; A G^T]` plus one refinement sweep.
fn constrained_step(
    obj: &dyn ReducedObjective,
    lri: &LowRankInverse,
    w: &[f64],
    z: &[f64],
    g: &SparseJacobian,
    ridge: f64,
) -> Result<Vec<f64>> {
    let n = lri.n();
    let a = lri.a_matrix();
    let gt = g.transpose();
    let agt = gt.left_mul(a);
    let (mc, r) = (g.nrows(), a.nrows());

    let mut extra: f64 = 0.0;
    let mut factor = None;
    for attempt in 0..=RIDGE_ESCALATIONS {
        let rows = n + r + if extra > 0.0 { mc } else { 0 };
        let mut k = Mat::<f64>::zeros(rows, mc);
        for (i, row) in (0..n).map(|i| (i, gt.row(i))) {
            for &(j, v) in row {
                k[(i, j)] = v;
            }
        }
        for j in 0..mc {
            for i in 0..r {
                k[(n + i, j)] = agt[(i, j)];
            }
            if extra > 0.0 {
                k[(n + r + j, j)] = extra.sqrt();
            }
        }
        let rf = qr_r(k);
        let diag: Vec<f64> = (0..mc).map(|i| rf[(i, i)].abs()).collect();
        let top = diag.iter().cloned().fold(0.0, f64::max);
        if diag.iter().all(|d| d.is_finite() && *d > 1e-14 * top) {
            if attempt > 0 {
                log::warn!("constraint system factorized with ridge {extra:e}");
            }
            factor = Some(rf);
            break;
        }
        extra = if extra > 0.0 { extra * 10.0 } else { ridge.max(1e-14 * top * top) };
    }
    let rf = factor.ok_or_else(|| {
        SgpError::NumericalFailure(format!("linearized constraint system is singular even with ridge {extra:e}"))
    })?;

    // y = [I, A^T] [G^T; A G^T] (R^T R)^-1 rhs
    let lift = |rhs: &[f64]| -> Vec<f64> {
        let mut s = col_from(rhs);
        solve_lower(rf.transpose(), s.as_mut());
        solve_upper(rf.as_ref(), s.as_mut());
        let sv = col_to_vec(s.as_ref());
        let mut y = gt.mul_vec(&sv);
        let v = product(agt.as_ref(), s.as_ref());
        let back = product(a.transpose(), v.as_ref());
        y.iter_mut().enumerate().for_each(|(i, yi)| *yi += back[(i, 0)]);
        y
    };
    let b = g.mul_vec(z);
    let mut y = lift(&b);
    let resid: Vec<f64> = b.iter().zip(g.mul_vec(&y)).map(|(bi, gy)| bi - gy).collect();
    lift(&resid).iter().zip(y.iter_mut()).for_each(|(c, yi)| *yi += c);

    Ok(obj.free_part(&y).iter().zip(w).map(|(a, b)| a - b).collect())
}

fn sup_norm(v: &[f64]) -> f64 {
    v.iter().fold(0.0, |m, x| m.max(x.abs()))
}

pub fn solve(obj: &dyn ReducedObjective, lri: &LowRankInverse, config: &GNConfig, w0: &[f64]) -> Result<GNResult> {
    config.validate()?;
    check_dims(obj, lri)?;
    if w0.len() != obj.free_dim() {
        return Err(SgpError::InvalidArgument(format!(
            "initial guess has length {}, expected {}",
            w0.len(),
            obj.free_dim()
        )));
    }
    let mut w = w0.to_vec();
    let mut lin = linearize(obj, lri, &w)?;
    let mut history = vec![lin.loss];
    let mut iterations = 0;
    let mut converged = false;
    let mut rises = 0;
    let mut non_monotone = false;

    while iterations < config.max_iter {
        let z = obj.z_of_w(&w);
        let delta = match (obj.soft_terms(&w), obj.constraint_jacobian(&z)) {
            (None, Some(g)) => constrained_step(obj, lri, &w, &z, &g, config.ridge)?,
            _ => newton_step(normal_matrix(obj, lri, &w), &lin.grad, config.ridge)?,
        };
        let step: Vec<f64> = delta.iter().map(|d| config.step_size * d).collect();
        let next: Vec<f64> = w.iter().zip(&step).map(|(a, b)| a + b).collect();
        iterations += 1;
        if next.iter().any(|v| !v.is_finite()) {
            return Err(SgpError::Divergence {
                iteration: iterations,
                reason: "non-finite iterate".into(),
                last_finite: w,
            });
        }
        let next_lin = linearize(obj, lri, &next)?;
        if !next_lin.loss.is_finite() {
            return Err(SgpError::Divergence {
                iteration: iterations,
                reason: "non-finite loss".into(),
                last_finite: w,
            });
        }
        rises = if next_lin.loss > lin.loss { rises + 1 } else { 0 };
        non_monotone |= rises >= 3;
        w = next;
        lin = next_lin;
        history.push(lin.loss);
        log::debug!("gauss-newton step {iterations}: loss {:e}, |step| {:e}", lin.loss, sup_norm(&step));
        if sup_norm(&step) < config.step_tol {
            converged = true;
            break;
        }
    }
    Ok(GNResult {
        z: obj.z_of_w(&w),
        w,
        loss_history: history,
        iterations,
        converged,
        non_monotone,
        gradient_norm: sup_norm(&lin.grad),
    })
}

/// `u(x) = sum_j beta_j (L_j K)(x, x_j)` over the inducing functionals.
#[derive(Clone, Debug, PartialEq, Serialize, Deserialize)]
pub struct SolutionModel {
    pub kernel: KernelSpec,
    pub phi: FunctionalVector,
    pub beta: Vec<f64>,
    pub gamma: f64,
    pub eta_used: f64,
    pub z_star: Vec<f64>,
}

/// `beta = (Theta + eta R)^-1 B (gamma I + Q)^-1 z`, evaluated as `gamma^-1/2 L^-T J^-T C z`.
pub fn build_solution(
    z_star: &[f64],
    lri: &LowRankInverse,
    l_factor: &CholeskyFactor,
    kernel: &KernelSpec,
    phi: &FunctionalVector,
) -> Result<SolutionModel> {
    if phi.len() != lri.rank() || l_factor.lower.nrows() != lri.rank() {
        return Err(SgpError::InvalidArgument(format!(
            "{} inducing functionals for a rank-{} inverse",
            phi.len(),
            lri.rank()
        )));
    }
    let mut x = col_from(&lri.project(z_star)?);
    solve_lower_transpose(lri.inner_chol(), x.as_mut());
    solve_lower_transpose(l_factor.lower.as_ref(), x.as_mut());
    let s = lri.gamma().powf(-0.5);
    Ok(SolutionModel {
        kernel: kernel.clone(),
        phi: phi.clone(),
        beta: col_to_vec(x.as_ref()).into_iter().map(|b| b * s).collect(),
        gamma: lri.gamma(),
        eta_used: l_factor.eta_used,
        z_star: z_star.to_vec(),
    })
}

impl SolutionModel {
    pub fn dim(&self) -> Option<usize> {
        self.phi.entries.first().map(|f| f.point.len())
    }

    pub fn evaluate(&self, x: &[f64]) -> Result<f64> {
        if let Some(d) = self.dim() {
            if d != x.len() {
                return Err(SgpError::InvalidArgument(format!(
                    "model expects {d} coordinates, got {}",
                    x.len()
                )));
            }
        }
        Ok(self.eval_unchecked(x))
    }

    fn eval_unchecked(&self, x: &[f64]) -> f64 {
        self.phi
            .entries
            .iter()
            .zip(&self.beta)
            .map(|(f, b)| b * pair_value(&self.kernel, x, &IDENTITY, &f.point, &f.op))
            .sum()
    }

    /// Pointwise [`Self::evaluate`] over many points.
    pub fn evaluate_many(&self, points: &[Vec<f64>]) -> Result<Vec<f64>> {
        if let Some(p) = points.iter().find(|p| Some(p.len()) != self.dim() && self.dim().is_some()) {
            return Err(SgpError::InvalidArgument(format!(
                "model expects {:?} coordinates, got {}",
                self.dim(),
                p.len()
            )));
        }
        Ok(points.par_iter().map(|p| self.eval_unchecked(p)).collect())
    }
}
