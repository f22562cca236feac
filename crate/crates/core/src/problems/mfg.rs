//! Stationary mean field game on the torus `[-0.5, 0.5]^2`:
//! `-nu Lap u + |grad u|^2 / 2 + V = m^2 + lambda`, `-nu Lap m - div(m grad u) = 0`,
//! with `int m = 1` and `int u = 0`.

use std::f64::consts::PI;

use super::{
    check_nu, instantiate, EliminationMap, Problem, ProblemKind, ReducedObjective, Setup, SoftTerms, SparseJacobian,
};
use crate::collocation::{BlockSpec, Domain, Layout, PointClass};
use crate::error::{Result, SgpError};
use crate::kernel::DiffOp;

pub const DEFAULT_NU: f64 = 0.1;

pub fn domain() -> Result<Domain> {
    Domain::torus(vec![(-0.5, 0.5), (-0.5, 0.5)])
}

/// Per-unknown layout: values, both first partials and the Laplacian at every sample.
pub fn layout() -> Layout {
    Layout {
        blocks: vec![
            BlockSpec::new("value", DiffOp::identity(), PointClass::All),
            BlockSpec::new("d1", DiffOp::partial(0), PointClass::All),
            BlockSpec::new("d2", DiffOp::partial(1), PointClass::All),
            BlockSpec::new("laplacian", DiffOp::laplacian(2), PointClass::All),
        ],
    }
}

pub fn potential(x: &[f64]) -> f64 {
    let a = 4.0 * PI * x[0];
    let b = 4.0 * PI * x[1];
    (a.sin() + a.cos() + b.sin()) / 2.0
}

/// Free vector `(z1[..N-1], z2, z3, z4, rho1[..N-1], rho2, rho3, rho4, lambda)`.
///
/// The last entries of `z1` and `rho1` are fixed by `sum z1 = 0` and `mean rho1 = 1`.
/// `z_of_w` returns the `4N` reduced variables of `u` followed by those of `m`.
#[derive(Clone, Debug)]
pub struct MfgModel {
    pub n: usize,
    pub nu: f64,
    pub gamma: f64,
    pub v: Vec<f64>,
}

/// Reduced-variable blocks of either unknown.
#[derive(Clone, Copy, Debug, PartialEq, Eq)]
enum Part {
    U,
    M,
}

impl MfgModel {
    fn unknown_len(&self) -> usize {
        4 * self.n - 1
    }

    pub fn lambda_index(&self) -> usize {
        2 * self.unknown_len()
    }

    fn offset(&self, part: Part) -> usize {
        match part {
            Part::U => 0,
            Part::M => self.unknown_len(),
        }
    }

    /// Reduced variable `block` (0..4) at point `j` of one unknown.
    fn value(&self, w: &[f64], part: Part, block: usize, j: usize) -> f64 {
        let n = self.n;
        let base = self.offset(part);
        if block == 0 {
            if j + 1 < n {
                w[base + j]
            } else {
                let s: f64 = w[base..base + n - 1].iter().sum();
                match part {
                    Part::U => -s,
                    Part::M => n as f64 - s,
                }
            }
        } else {
            w[base + n - 1 + (block - 1) * n + j]
        }
    }

    /// Nonzeros of the derivative of `value(.., part, block, j)` with respect to `w`.
    fn push_chain(&self, jac: &mut SparseJacobian, row: usize, part: Part, block: usize, j: usize, coef: f64) {
        let n = self.n;
        let base = self.offset(part);
        if block == 0 {
            if j + 1 < n {
                jac.push(row, base + j, coef);
            } else {
                for k in 0..n - 1 {
                    jac.push(row, base + k, -coef);
                }
            }
        } else {
            jac.push(row, base + n - 1 + (block - 1) * n + j, coef);
        }
    }

    pub fn hjb(&self, w: &[f64], j: usize) -> f64 {
        let z2 = self.value(w, Part::U, 1, j);
        let z3 = self.value(w, Part::U, 2, j);
        let z4 = self.value(w, Part::U, 3, j);
        let r1 = self.value(w, Part::M, 0, j);
        self.nu * z4 - 0.5 * (z2 * z2 + z3 * z3) - self.v[j] + r1 * r1 + w[self.lambda_index()]
    }

    pub fn fp(&self, w: &[f64], j: usize) -> f64 {
        let z2 = self.value(w, Part::U, 1, j);
        let z3 = self.value(w, Part::U, 2, j);
        let z4 = self.value(w, Part::U, 3, j);
        let r1 = self.value(w, Part::M, 0, j);
        let r2 = self.value(w, Part::M, 1, j);
        let r3 = self.value(w, Part::M, 2, j);
        let r4 = self.value(w, Part::M, 3, j);
        -self.nu * r4 - r2 * z2 - r3 * z3 - r1 * z4
    }

    /// Sum of squared HJB and FP residuals.
    pub fn pde_residual_sq(&self, w: &[f64]) -> f64 {
        (0..self.n).map(|j| self.hjb(w, j).powi(2) + self.fp(w, j).powi(2)).sum()
    }
}

impl EliminationMap for MfgModel {
    fn free_dim(&self) -> usize {
        2 * self.unknown_len() + 1
    }

    fn z_of_w(&self, w: &[f64]) -> Vec<f64> {
        let n = self.n;
        let mut z = Vec::with_capacity(8 * n);
        for part in [Part::U, Part::M] {
            for block in 0..4 {
                z.extend((0..n).map(|j| self.value(w, part, block, j)));
            }
        }
        z
    }

    fn jacobian(&self, _w: &[f64]) -> SparseJacobian {
        let n = self.n;
        let mut jac = SparseJacobian::new(8 * n, self.free_dim());
        for (p, part) in [Part::U, Part::M].into_iter().enumerate() {
            for block in 0..4 {
                for j in 0..n {
                    self.push_chain(&mut jac, p * 4 * n + block * n + j, part, block, j, 1.0);
                }
            }
        }
        jac
    }
}

impl ReducedObjective for MfgModel {
    fn field_len(&self) -> usize {
        4 * self.n
    }

    fn field_count(&self) -> usize {
        2
    }

    fn field_weight(&self) -> f64 {
        self.gamma
    }

    fn soft_terms(&self, w: &[f64]) -> Option<SoftTerms> {
        let n = self.n;
        let mut values = Vec::with_capacity(2 * n + 1);
        let mut jac = SparseJacobian::new(2 * n + 1, self.free_dim());
        for j in 0..n {
            let z2 = self.value(w, Part::U, 1, j);
            let z3 = self.value(w, Part::U, 2, j);
            let r1 = self.value(w, Part::M, 0, j);
            values.push(self.hjb(w, j));
            self.push_chain(&mut jac, j, Part::U, 1, j, -z2);
            self.push_chain(&mut jac, j, Part::U, 2, j, -z3);
            self.push_chain(&mut jac, j, Part::U, 3, j, self.nu);
            self.push_chain(&mut jac, j, Part::M, 0, j, 2.0 * r1);
            jac.push(j, self.lambda_index(), 1.0);
        }
        for j in 0..n {
            let row = n + j;
            let z2 = self.value(w, Part::U, 1, j);
            let z3 = self.value(w, Part::U, 2, j);
            let z4 = self.value(w, Part::U, 3, j);
            let r1 = self.value(w, Part::M, 0, j);
            let r2 = self.value(w, Part::M, 1, j);
            let r3 = self.value(w, Part::M, 2, j);
            values.push(self.fp(w, j));
            self.push_chain(&mut jac, row, Part::U, 1, j, -r2);
            self.push_chain(&mut jac, row, Part::U, 2, j, -r3);
            self.push_chain(&mut jac, row, Part::U, 3, j, -r1);
            self.push_chain(&mut jac, row, Part::M, 0, j, -z4);
            self.push_chain(&mut jac, row, Part::M, 1, j, -z2);
            self.push_chain(&mut jac, row, Part::M, 2, j, -z3);
            self.push_chain(&mut jac, row, Part::M, 3, j, -self.nu);
        }
        values.push(w[self.lambda_index()]);
        jac.push(2 * n, self.lambda_index(), 1.0);
        let mut weights = vec![1.0; 2 * n];
        weights.push(self.gamma);
        Some(SoftTerms {
            values,
            weights,
            jacobian: jac,
        })
    }

    /// Reads `w` back from `z`; the multiplier is not part of `z` and comes back as zero.
    fn free_part(&self, z: &[f64]) -> Vec<f64> {
        let n = self.n;
        let mut w = Vec::with_capacity(self.free_dim());
        for part in 0..2 {
            let base = part * 4 * n;
            w.extend_from_slice(&z[base..base + n - 1]);
            w.extend_from_slice(&z[base + n..base + 4 * n]);
        }
        w.push(0.0);
        w
    }

    /// Mass and mean constraints followed by the HJB and FP residuals at `z`.
    fn constraint_residuals(&self, w: &[f64], z: &[f64]) -> Vec<f64> {
        let n = self.n;
        let at = |part: usize, block: usize, j: usize| z[part * 4 * n + block * n + j];
        let lambda = w[self.lambda_index()];
        let mut out = vec![
            (0..n).map(|j| at(0, 0, j)).sum::<f64>(),
            (0..n).map(|j| at(1, 0, j)).sum::<f64>() / n as f64 - 1.0,
        ];
        out.extend((0..n).map(|j| {
            let (z2, z3, z4, r1) = (at(0, 1, j), at(0, 2, j), at(0, 3, j), at(1, 0, j));
            self.nu * z4 - 0.5 * (z2 * z2 + z3 * z3) - self.v[j] + r1 * r1 + lambda
        }));
        out.extend((0..n).map(|j| {
            let (z2, z3, z4) = (at(0, 1, j), at(0, 2, j), at(0, 3, j));
            let (r1, r2, r3, r4) = (at(1, 0, j), at(1, 1, j), at(1, 2, j), at(1, 3, j));
            -self.nu * r4 - r2 * z2 - r3 * z3 - r1 * z4
        }));
        out
    }

    /// Uniform density, everything else zero.
    fn initial_guess(&self) -> Vec<f64> {
        let mut w = vec![0.0; self.free_dim()];
        let base = self.offset(Part::M);
        w[base..base + self.n - 1].iter_mut().for_each(|x| *x = 1.0);
        w
    }
}

pub fn mfg_problem(setup: &Setup, nu: f64, gamma: f64) -> Result<Problem> {
    let nu = check_nu(nu)?;
    if !(gamma > 0.0 && gamma.is_finite()) {
        return Err(SgpError::InvalidArgument(format!("gamma must be positive, got {gamma}")));
    }
    let spec = instantiate(ProblemKind::Mfg, domain()?, layout(), setup, Some(nu))?;
    let model = MfgModel {
        n: spec.samples.interior.len(),
        nu,
        gamma,
        v: spec.samples.interior.iter().map(|x| potential(x)).collect(),
    };
    Ok(Problem {
        spec,
        objective: Box::new(model),
    })
}
