//! Viscous Burgers `u_t + u u_x - nu u_xx = 0` on `(0, 1] x (-1, 1)`, points ordered `(t, x)`.

use std::f64::consts::PI;

use super::{check_nu, instantiate, EliminationMap, Problem, ProblemKind, ReducedObjective, Setup, SparseJacobian};
use crate::collocation::{BlockSpec, Domain, Layout, PointClass};
use crate::error::Result;
use crate::kernel::DiffOp;

pub const DEFAULT_NU: f64 = 0.02;

pub fn domain() -> Result<Domain> {
    Domain::space_time(vec![(0.0, 1.0), (-1.0, 1.0)], 0)
}

/// Layout shared by the space-time problems: boundary values, then `u, u_x, u_xx, u_t` inside.
pub fn layout() -> Layout {
    Layout {
        blocks: vec![
            BlockSpec::new("boundary", DiffOp::identity(), PointClass::Boundary),
            BlockSpec::new("u", DiffOp::identity(), PointClass::Interior),
            BlockSpec::new("u_x", DiffOp::partial(1), PointClass::Interior),
            BlockSpec::new("u_xx", DiffOp::second_partial(1), PointClass::Interior),
            BlockSpec::new("u_t", DiffOp::partial(0), PointClass::Interior),
        ],
    }
}

/// Initial and side data.
pub fn boundary_value(p: &[f64]) -> f64 {
    if p[0] == 0.0 {
        -(PI * p[1]).sin()
    } else {
        0.0
    }
}

/// Free `w = (u, u_x, u_xx)` at interior points, `u_t` given by the PDE.
#[derive(Clone, Debug)]
pub struct SpaceTimeMap {
    pub n_interior: usize,
    pub g: Vec<f64>,
    pub rule: TimeDerivative,
}

/// Closed form for `u_t` in terms of `(u, u_x, u_xx)`.
#[derive(Clone, Debug)]
pub enum TimeDerivative {
    /// `nu u_xx - u u_x`
    Burgers { nu: f64 },
    /// `u_xx - u_x^2 / 2 - u - x u_x + f`
    Parabolic { x: Vec<f64>, f: Vec<f64> },
}

impl TimeDerivative {
    /// Value and partials with respect to `(u, u_x, u_xx)` at interior index `i`.
    fn eval(&self, i: usize, u: f64, ux: f64, uxx: f64) -> (f64, [f64; 3]) {
        match self {
            TimeDerivative::Burgers { nu } => (nu * uxx - u * ux, [-ux, -u, *nu]),
            TimeDerivative::Parabolic { x, f } => (
                uxx - 0.5 * ux * ux - u - x[i] * ux + f[i],
                [-1.0, -ux - x[i], 1.0],
            ),
        }
    }
}

impl EliminationMap for SpaceTimeMap {
    fn free_dim(&self) -> usize {
        3 * self.n_interior
    }

    fn z_of_w(&self, w: &[f64]) -> Vec<f64> {
        let n = self.n_interior;
        let mut z = Vec::with_capacity(self.g.len() + 4 * n);
        z.extend_from_slice(&self.g);
        z.extend_from_slice(w);
        z.extend((0..n).map(|i| self.rule.eval(i, w[i], w[n + i], w[2 * n + i]).0));
        z
    }

    fn jacobian(&self, w: &[f64]) -> SparseJacobian {
        let n = self.n_interior;
        let nb = self.g.len();
        let mut j = SparseJacobian::new(nb + 4 * n, 3 * n);
        for k in 0..3 * n {
            j.push(nb + k, k, 1.0);
        }
        for i in 0..n {
            let (_, d) = self.rule.eval(i, w[i], w[n + i], w[2 * n + i]);
            for (b, v) in d.iter().enumerate() {
                j.push(nb + 3 * n + i, b * n + i, *v);
            }
        }
        j
    }
}

impl ReducedObjective for SpaceTimeMap {
    fn field_len(&self) -> usize {
        self.g.len() + 4 * self.n_interior
    }

    fn constraint_jacobian(&self, z: &[f64]) -> Option<SparseJacobian> {
        let n = self.n_interior;
        let nb = self.g.len();
        let mut g = SparseJacobian::new(nb + n, nb + 4 * n);
        for i in 0..nb {
            g.push(i, i, 1.0);
        }
        for i in 0..n {
            let at = |b: usize| z[nb + b * n + i];
            let (_, d) = self.rule.eval(i, at(0), at(1), at(2));
            g.push(nb + i, nb + 3 * n + i, 1.0);
            for (b, v) in d.iter().enumerate() {
                g.push(nb + i, nb + b * n + i, -v);
            }
        }
        Some(g)
    }

    fn free_part(&self, z: &[f64]) -> Vec<f64> {
        let nb = self.g.len();
        z[nb..nb + 3 * self.n_interior].to_vec()
    }

    fn constraint_residuals(&self, _w: &[f64], z: &[f64]) -> Vec<f64> {
        let n = self.n_interior;
        let nb = self.g.len();
        let boundary = (0..nb).map(|i| z[i] - self.g[i]);
        let interior = (0..n).map(|i| {
            let at = |b: usize| z[nb + b * n + i];
            at(3) - self.rule.eval(i, at(0), at(1), at(2)).0
        });
        boundary.chain(interior).collect()
    }
}

pub fn burgers_problem(setup: &Setup, nu: f64) -> Result<Problem> {
    let nu = check_nu(nu)?;
    let spec = instantiate(ProblemKind::Burgers, domain()?, layout(), setup, Some(nu))?;
    let map = SpaceTimeMap {
        n_interior: spec.samples.interior.len(),
        g: spec.samples.boundary.iter().map(|p| boundary_value(p)).collect(),
        rule: TimeDerivative::Burgers { nu },
    };
    Ok(Problem {
        spec,
        objective: Box::new(map),
    })
}
