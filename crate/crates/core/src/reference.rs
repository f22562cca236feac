//! Reference solutions, grid errors, reference-grid files and the Nystrom error.

use std::f64::consts::PI;
use std::path::Path;

use faer::{Mat, MatRef, Side};
use rand::{Rng, SeedableRng};
use rand_chacha::ChaCha20Rng;
use rayon::prelude::*;
use serde::{Deserialize, Serialize};

use crate::collocation::Domain;
use crate::dense::{col_from, product};
use crate::error::{Result, SgpError};
use crate::woodbury::LowRankInverse;

pub const COLE_HOPF_NODES: usize = 100;

/// Gauss-Hermite nodes and weights for `int exp(-s^2) f(s) ds`, nodes in decreasing order.
///
/// Starting points are the eigenvalues of the Jacobi matrix; each node is then
/// polished by Newton steps on the normalized three-term recurrence.
pub fn gauss_hermite(n: usize) -> (Vec<f64>, Vec<f64>) {
    const PIM4: f64 = 0.751_125_544_464_942_5;
    let mut x = vec![0.0; n];
    let mut w = vec![0.0; n];
    if n == 0 {
        return (x, w);
    }
    let nf = n as f64;
    let jacobi = Mat::from_fn(n, n, |i, j| {
        if i.abs_diff(j) == 1 {
            (i.max(j) as f64 / 2.0).sqrt()
        } else {
            0.0
        }
    });
    let start = match jacobi.self_adjoint_eigenvalues(Side::Lower) {
        Ok(ev) => ev,
        Err(_) => return (vec![f64::NAN; n], vec![f64::NAN; n]),
    };
    for i in 0..n.div_ceil(2) {
        let mut z = start[n - 1 - i];
        let mut pp = 0.0;
        for _ in 0..100 {
            let mut p1 = PIM4;
            let mut p2 = 0.0;
            for j in 1..=n {
                let p3 = p2;
                p2 = p1;
                let jf = j as f64;
                p1 = z * (2.0 / jf).sqrt() * p2 - ((jf - 1.0) / jf).sqrt() * p3;
            }
            pp = (2.0 * nf).sqrt() * p2;
            let z1 = z;
            z = z1 - p1 / pp;
            if (z - z1).abs() <= 1e-15 * z.abs().max(1.0) {
                break;
            }
        }
        x[i] = z;
        x[n - 1 - i] = -z;
        w[i] = 2.0 / (pp * pp);
        w[n - 1 - i] = w[i];
    }
    (x, w)
}

/// Exact viscous Burgers solution for `u(0, x) = -sin(pi x)` with zero side data.
pub fn cole_hopf_burgers(t: f64, x: f64, nu: f64) -> Result<f64> {
    let rule = gauss_hermite(COLE_HOPF_NODES);
    cole_hopf_with(&rule, t, x, nu)
}

/// [`cole_hopf_burgers`] with a caller-supplied quadrature rule.
pub fn cole_hopf_with(rule: &(Vec<f64>, Vec<f64>), t: f64, x: f64, nu: f64) -> Result<f64> {
    if !(nu > 0.0) || !(t >= 0.0) || !t.is_finite() || !x.is_finite() {
        return Err(SgpError::InvalidArgument(format!(
            "cole-hopf needs t >= 0 and nu > 0, got t = {t}, nu = {nu}"
        )));
    }
    if t == 0.0 {
        return Ok(-(PI * x).sin());
    }
    let (nodes, weights) = rule;
    let scale = 2.0 * (nu * t).sqrt();
    let expo: Vec<f64> = nodes
        .iter()
        .map(|s| -(PI * (x - scale * s)).cos() / (2.0 * PI * nu))
        .collect();
    let top = expo.iter().cloned().fold(f64::NEG_INFINITY, f64::max);
    let mut num = 0.0;
    let mut den = 0.0;
    for ((s, w), e) in nodes.iter().zip(weights).zip(&expo) {
        let g = w * (e - top).exp();
        num += (PI * (x - scale * s)).sin() * g;
        den += g;
    }
    if !(den > 0.0) || !den.is_finite() {
        return Err(SgpError::NumericalFailure(format!(
            "cole-hopf denominator degenerate at t = {t}, x = {x}"
        )));
    }
    Ok(-num / den)
}

/// Values on an evaluation lattice, rows ordered with the first coordinate outermost.
#[derive(Clone, Debug, PartialEq, Serialize, Deserialize)]
pub struct GridField {
    pub axis_names: Vec<String>,
    pub points: Vec<Vec<f64>>,
    pub values: Vec<f64>,
}

impl GridField {
    pub fn len(&self) -> usize {
        self.values.len()
    }

    pub fn is_empty(&self) -> bool {
        self.values.is_empty()
    }

    pub fn max_abs(&self) -> f64 {
        self.values.iter().fold(0.0, |m, v| m.max(v.abs()))
    }

    pub fn write_csv(&self, path: &Path) -> Result<()> {
        let mut w = csv::Writer::from_path(path)?;
        let mut header = self.axis_names.clone();
        header.push("value".into());
        w.write_record(&header)?;
        for (p, v) in self.points.iter().zip(&self.values) {
            let mut rec: Vec<String> = p.iter().map(|c| c.to_string()).collect();
            rec.push(v.to_string());
            w.write_record(&rec)?;
        }
        w.flush()?;
        Ok(())
    }
}

/// Axis labels used in grid files.
pub fn axis_names(domain: &Domain) -> Vec<String> {
    match domain.time_axis {
        Some(ta) => (0..domain.dim())
            .map(|a| if a == ta { "t".to_string() } else { "x".to_string() })
            .collect(),
        None => (1..=domain.dim()).map(|a| format!("x{a}")).collect(),
    }
}

/// Equally spaced lattice with endpoints; periodic axes drop the wrap-around point.
pub fn grid_points(domain: &Domain, resolution: usize) -> Result<Vec<Vec<f64>>> {
    if resolution < 2 {
        return Err(SgpError::InvalidArgument(format!("grid resolution must be >= 2, got {resolution}")));
    }
    let axes: Vec<Vec<f64>> = domain
        .bounds
        .iter()
        .zip(&domain.periodic)
        .map(|(&(lo, hi), &per)| {
            let h = if per {
                (hi - lo) / resolution as f64
            } else {
                (hi - lo) / (resolution - 1) as f64
            };
            (0..resolution)
                .map(|k| if !per && k == resolution - 1 { hi } else { lo + k as f64 * h })
                .collect()
        })
        .collect();
    let mut points = vec![Vec::new()];
    for axis in &axes {
        points = points
            .into_iter()
            .flat_map(|p| {
                axis.iter().map(move |&c| {
                    let mut q = p.clone();
                    q.push(c);
                    q
                })
            })
            .collect();
    }
    Ok(points)
}

/// Sup-norm of `model - reference` on the lattice, with the grid of absolute errors.
pub fn linf_on_grid(
    model: impl Fn(&[f64]) -> Result<f64> + Sync,
    reference: impl Fn(&[f64]) -> Result<f64> + Sync,
    domain: &Domain,
    resolution: usize,
) -> Result<(f64, GridField)> {
    let points = grid_points(domain, resolution)?;
    let values = points
        .par_iter()
        .map(|p| Ok((model(p)? - reference(p)?).abs()))
        .collect::<Result<Vec<f64>>>()?;
    let grid = GridField {
        axis_names: axis_names(domain),
        points,
        values,
    };
    Ok((grid.max_abs(), grid))
}

/// Bilinear lookup into a rectangular lattice.
#[derive(Clone, Debug, PartialEq)]
pub struct ReferenceGrid {
    pub xs: Vec<f64>,
    pub ys: Vec<f64>,
    /// Row-major, `values[i * ys.len() + j]` at `(xs[i], ys[j])`.
    pub values: Vec<f64>,
}

fn bracket(axis: &[f64], v: f64) -> (usize, f64) {
    if axis.len() == 1 {
        return (0, 0.0);
    }
    let v = v.clamp(axis[0], axis[axis.len() - 1]);
    let hi = axis.partition_point(|&a| a <= v).clamp(1, axis.len() - 1);
    let lo = hi - 1;
    (lo, (v - axis[lo]) / (axis[hi] - axis[lo]))
}

impl ReferenceGrid {
    /// Bilinear interpolation; points outside the lattice are clamped onto it.
    pub fn eval(&self, p: &[f64]) -> f64 {
        let ny = self.ys.len();
        let (i, a) = bracket(&self.xs, p[0]);
        let (j, b) = bracket(&self.ys, p[1]);
        let at = |ii: usize, jj: usize| self.values[ii.min(self.xs.len() - 1) * ny + jj.min(ny - 1)];
        (1.0 - a) * (1.0 - b) * at(i, j) + a * (1.0 - b) * at(i + 1, j) + (1.0 - a) * b * at(i, j + 1) + a * b * at(i + 1, j + 1)
    }
}

/// Reads a three-column lattice file; `row` in errors is the 1-based line number.
pub fn ingest_reference_grid(path: &Path) -> Result<ReferenceGrid> {
    let mut rdr = csv::ReaderBuilder::new().has_headers(true).from_path(path)?;
    let header = rdr.headers()?.clone();
    if header.len() != 3 {
        return Err(SgpError::Ingestion {
            row: 1,
            reason: format!("expected 3 columns, header has {}", header.len()),
        });
    }
    let mut rows = Vec::new();
    for (k, rec) in rdr.records().enumerate() {
        let line = k + 2;
        let rec = rec.map_err(|e| SgpError::Ingestion {
            row: line,
            reason: e.to_string(),
        })?;
        if rec.len() != 3 {
            return Err(SgpError::Ingestion {
                row: line,
                reason: format!("expected 3 fields, found {}", rec.len()),
            });
        }
        let mut v = [0.0; 3];
        for (c, field) in rec.iter().enumerate() {
            v[c] = field.trim().parse::<f64>().ok().filter(|x| x.is_finite()).ok_or_else(|| {
                SgpError::Ingestion {
                    row: line,
                    reason: format!("'{field}' is not a finite number"),
                }
            })?;
        }
        rows.push(v);
    }
    if rows.is_empty() {
        return Err(SgpError::Ingestion {
            row: 2,
            reason: "no data rows".into(),
        });
    }
    let ny = rows.iter().take_while(|r| r[0] == rows[0][0]).count();
    let ys: Vec<f64> = rows[..ny].iter().map(|r| r[1]).collect();
    if let Some(k) = (1..ny).find(|&k| ys[k] <= ys[k - 1]) {
        return Err(SgpError::Ingestion {
            row: k + 2,
            reason: "second coordinate must increase within a row block".into(),
        });
    }
    let mut xs = Vec::new();
    for (k, r) in rows.iter().enumerate() {
        let (b, j) = (k / ny, k % ny);
        if j == 0 {
            if b > 0 && r[0] <= xs[b - 1] {
                return Err(SgpError::Ingestion {
                    row: k + 2,
                    reason: format!("expected lattice point with first coordinate above {}", xs[b - 1]),
                });
            }
            xs.push(r[0]);
        }
        if r[0] != xs[b] || r[1] != ys[j] {
            return Err(SgpError::Ingestion {
                row: k + 2,
                reason: format!("expected lattice point ({}, {}), found ({}, {})", xs[b], ys[j], r[0], r[1]),
            });
        }
    }
    if rows.len() % ny != 0 {
        return Err(SgpError::Ingestion {
            row: rows.len() + 2,
            reason: format!("missing lattice point ({}, {})", xs[xs.len() - 1], ys[rows.len() % ny]),
        });
    }
    Ok(ReferenceGrid {
        xs,
        ys,
        values: rows.iter().map(|r| r[2]).collect(),
    })
}

#[derive(Clone, Copy, Debug, PartialEq, Serialize, Deserialize)]
pub struct NystromReport {
    pub error: f64,
    pub iterations: usize,
    pub converged: bool,
}

pub const POWER_TOL: f64 = 1e-6;
pub const POWER_MAX_ITER: usize = 1000;

/// Spectral norm of `K(psi, psi) - Q(psi, psi)` by power iteration.
pub fn nystrom_error(dense_psi: MatRef<'_, f64>, lri: &LowRankInverse) -> Result<NystromReport> {
    let n = lri.n();
    if dense_psi.nrows() != n || dense_psi.ncols() != n {
        return Err(SgpError::InvalidArgument(format!(
            "dense K(psi, psi) is {}x{}, expected {n}x{n}",
            dense_psi.nrows(),
            dense_psi.ncols()
        )));
    }
    let a = lri.a_matrix();
    let g = lri.gamma();
    let apply = |v: &Mat<f64>| -> Mat<f64> {
        let mut out = product(dense_psi, v.as_ref());
        let av = product(a, v.as_ref());
        crate::dense::gemm(out.as_mut(), true, a.transpose(), av.as_ref(), -g);
        out
    };
    let mut rng = ChaCha20Rng::seed_from_u64(0x5eed);
    let start: Vec<f64> = (0..n).map(|_| rng.random::<f64>() + 0.5).collect();
    let mut v = col_from(&start);
    let norm = v.norm_l2();
    v.col_iter_mut().for_each(|c| c.iter_mut().for_each(|x| *x /= norm));
    let mut estimate = 0.0;
    for it in 1..=POWER_MAX_ITER {
        let ev = apply(&v);
        let rayleigh: f64 = (0..n).map(|i| v[(i, 0)] * ev[(i, 0)]).sum();
        let norm = ev.norm_l2();
        let next = rayleigh.abs();
        if norm == 0.0 {
            return Ok(NystromReport {
                error: 0.0,
                iterations: it,
                converged: true,
            });
        }
        let done = it > 1 && (next - estimate).abs() <= POWER_TOL * next.abs();
        estimate = next;
        if done {
            return Ok(NystromReport {
                error: estimate,
                iterations: it,
                converged: true,
            });
        }
        v = Mat::from_fn(n, 1, |i, _| ev[(i, 0)] / norm);
    }
    log::warn!("power iteration did not converge in {POWER_MAX_ITER} steps");
    Ok(NystromReport {
        error: estimate,
        iterations: POWER_MAX_ITER,
        converged: false,
    })
}
