//! `u_t - u_xx + u_x^2 / 2 + u + x u_x = f` on `(0, 1] x (0, 3/2)`, points ordered `(t, x)`.

use std::f64::consts::PI;

use super::burgers::{layout, SpaceTimeMap, TimeDerivative};
use super::{instantiate, Problem, ProblemKind, Setup};
use crate::collocation::Domain;
use crate::error::Result;

pub const X_MAX: f64 = 1.5;

pub fn domain() -> Result<Domain> {
    Domain::space_time(vec![(0.0, 1.0), (0.0, X_MAX)], 0)
}

pub fn exact_solution(p: &[f64]) -> f64 {
    let x = p[1];
    ((PI * x).sin() + 2.0 * (2.0 * PI * x).cos()) * (-p[0]).exp()
}

pub fn exact_u_x(p: &[f64]) -> f64 {
    let x = p[1];
    (PI * (PI * x).cos() - 4.0 * PI * (2.0 * PI * x).sin()) * (-p[0]).exp()
}

pub fn exact_u_xx(p: &[f64]) -> f64 {
    let x = p[1];
    (-PI * PI * (PI * x).sin() - 8.0 * PI * PI * (2.0 * PI * x).cos()) * (-p[0]).exp()
}

pub fn exact_u_t(p: &[f64]) -> f64 {
    -exact_solution(p)
}

pub fn forcing(p: &[f64]) -> f64 {
    let ux = exact_u_x(p);
    exact_u_t(p) - exact_u_xx(p) + 0.5 * ux * ux + exact_solution(p) + p[1] * ux
}

pub fn parabolic_problem(setup: &Setup) -> Result<Problem> {
    let spec = instantiate(ProblemKind::Parabolic, domain()?, layout(), setup, None)?;
    let interior = &spec.samples.interior;
    let map = SpaceTimeMap {
        n_interior: interior.len(),
        g: spec.samples.boundary.iter().map(|p| exact_solution(p)).collect(),
        rule: TimeDerivative::Parabolic {
            x: interior.iter().map(|p| p[1]).collect(),
            f: interior.iter().map(|p| forcing(p)).collect(),
        },
    };
    Ok(Problem {
        spec,
        objective: Box::new(map),
    })
}
