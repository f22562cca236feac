//! `Delta u = c u (d1 u + d2 u) + f` on `(0, 3)^2` with `u = 0` on the boundary.

use std::f64::consts::PI;

use super::{instantiate, EliminationMap, Problem, ProblemKind, ReducedObjective, Setup, SparseJacobian};
use crate::collocation::{BlockSpec, Domain, Layout, PointClass};
use crate::error::Result;
use crate::kernel::DiffOp;

pub const SIDE: f64 = 3.0;

pub fn layout() -> Layout {
    Layout {
        blocks: vec![
            BlockSpec::new("dirac", DiffOp::identity(), PointClass::All),
            BlockSpec::new("sum_d1", DiffOp::sum_first(2), PointClass::Interior),
            BlockSpec::new("laplacian", DiffOp::laplacian(2), PointClass::Interior),
        ],
    }
}

pub fn exact_solution(x: &[f64]) -> f64 {
    let s1 = (PI * x[0]).sin() * (PI * x[1]).sin();
    let s4 = (4.0 * PI * x[0]).sin() * (4.0 * PI * x[1]).sin();
    s1 + 4.0 * s4
}

/// `d1 u + d2 u` of the exact solution.
pub fn exact_sum_d1(x: &[f64]) -> f64 {
    let (a, b) = (PI * x[0], PI * x[1]);
    let (a4, b4) = (4.0 * a, 4.0 * b);
    PI * (a.cos() * b.sin() + a.sin() * b.cos()) + 16.0 * PI * (a4.cos() * b4.sin() + a4.sin() * b4.cos())
}

pub fn exact_laplacian(x: &[f64]) -> f64 {
    let s1 = (PI * x[0]).sin() * (PI * x[1]).sin();
    let s4 = (4.0 * PI * x[0]).sin() * (4.0 * PI * x[1]).sin();
    -2.0 * PI * PI * s1 - 128.0 * PI * PI * s4
}

/// Source term making [`exact_solution`] solve the equation with the given coupling.
pub fn forcing(x: &[f64], coupling: f64) -> f64 {
    exact_laplacian(x) - coupling * exact_solution(x) * exact_sum_d1(x)
}

/// `z = (w1, 0, w2, c w1 * w2 + f)` with `w1` the interior values and `w2` the interior `d1 u + d2 u`.
#[derive(Clone, Debug)]
pub struct EllipticMap {
    pub n_interior: usize,
    pub n_boundary: usize,
    pub coupling: f64,
    pub f: Vec<f64>,
    pub g: Vec<f64>,
}

impl EliminationMap for EllipticMap {
    fn free_dim(&self) -> usize {
        2 * self.n_interior
    }

    fn z_of_w(&self, w: &[f64]) -> Vec<f64> {
        let n = self.n_interior;
        let (w1, w2) = w.split_at(n);
        let mut z = Vec::with_capacity(3 * n + self.n_boundary);
        z.extend_from_slice(w1);
        z.extend_from_slice(&self.g);
        z.extend_from_slice(w2);
        z.extend((0..n).map(|i| self.coupling * w1[i] * w2[i] + self.f[i]));
        z
    }

    fn jacobian(&self, w: &[f64]) -> SparseJacobian {
        let n = self.n_interior;
        let nb = self.n_boundary;
        let mut j = SparseJacobian::new(3 * n + nb, 2 * n);
        for i in 0..n {
            j.push(i, i, 1.0);
            j.push(n + nb + i, n + i, 1.0);
            let r = 2 * n + nb + i;
            j.push(r, i, self.coupling * w[n + i]);
            j.push(r, n + i, self.coupling * w[i]);
        }
        j
    }
}

impl ReducedObjective for EllipticMap {
    fn field_len(&self) -> usize {
        3 * self.n_interior + self.n_boundary
    }

    fn constraint_jacobian(&self, z: &[f64]) -> Option<SparseJacobian> {
        let n = self.n_interior;
        let nb = self.n_boundary;
        let mut g = SparseJacobian::new(nb + n, 3 * n + nb);
        for i in 0..nb {
            g.push(i, n + i, 1.0);
        }
        for i in 0..n {
            g.push(nb + i, 2 * n + nb + i, 1.0);
            g.push(nb + i, i, -self.coupling * z[n + nb + i]);
            g.push(nb + i, n + nb + i, -self.coupling * z[i]);
        }
        Some(g)
    }

    fn free_part(&self, z: &[f64]) -> Vec<f64> {
        let n = self.n_interior;
        let nb = self.n_boundary;
        z[..n].iter().chain(&z[n + nb..2 * n + nb]).copied().collect()
    }

    fn constraint_residuals(&self, _w: &[f64], z: &[f64]) -> Vec<f64> {
        let n = self.n_interior;
        let nb = self.n_boundary;
        let boundary = (0..nb).map(|i| z[n + i] - self.g[i]);
        let interior = (0..n).map(|i| z[2 * n + nb + i] - (self.coupling * z[i] * z[n + nb + i] + self.f[i]));
        boundary.chain(interior).collect()
    }
}

pub fn elliptic_problem(setup: &Setup) -> Result<Problem> {
    elliptic_problem_with_coupling(setup, 1.0)
}

/// Same as [`elliptic_problem`] with the nonlinear term scaled by `coupling`; zero makes it linear.
pub fn elliptic_problem_with_coupling(setup: &Setup, coupling: f64) -> Result<Problem> {
    let domain = Domain::boxed(vec![(0.0, SIDE), (0.0, SIDE)])?;
    let spec = instantiate(ProblemKind::Elliptic, domain, layout(), setup, None)?;
    let map = EllipticMap {
        n_interior: spec.samples.interior.len(),
        n_boundary: spec.samples.boundary.len(),
        coupling,
        f: spec.samples.interior.iter().map(|x| forcing(x, coupling)).collect(),
        g: vec![0.0; spec.samples.boundary.len()],
    };
    Ok(Problem {
        spec,
        objective: Box::new(map),
    })
}
