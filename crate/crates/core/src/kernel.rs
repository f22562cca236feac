//! Base kernels and their bilinear forms under differential-operator functionals.
//!
//! Every supported kernel is a product of one-dimensional kernels, one per axis.
//! Derivatives are taken in closed form from per-axis tables of `k^(n)(s)` for
//! `n <= 4`, where `s = x_a - y_a`, and combined by the product rule. A derivative
//! of order `b` with respect to the second argument picks up a factor `(-1)^b`.

use std::cmp::Ordering;
use std::f64::consts::PI;
use std::sync::LazyLock;

use serde::{Deserialize, Serialize};

use crate::error::{Result, SgpError};

/// Largest supported spatial dimension.
pub const MAX_AXES: usize = 4;

/// Largest derivative order of a single operator term.
pub const MAX_TERM_ORDER: u8 = 2;

/// Per-axis derivative orders of one operator term.
#[derive(Clone, Copy, Debug, Default, PartialEq, Eq, Hash, PartialOrd, Ord, Serialize, Deserialize)]
pub struct MultiIndex(pub [u8; MAX_AXES]);

impl MultiIndex {
    pub const ZERO: MultiIndex = MultiIndex([0; MAX_AXES]);

    /// `order`-th derivative along `axis`.
    pub fn along(axis: usize, order: u8) -> Self {
        let mut idx = [0; MAX_AXES];
        idx[axis] = order;
        MultiIndex(idx)
    }

    pub fn total_order(&self) -> u8 {
        self.0.iter().sum()
    }

    /// Highest axis carrying a nonzero order, if any.
    pub fn highest_axis(&self) -> Option<usize> {
        self.0.iter().rposition(|&o| o > 0)
    }
}

/// A linear differential operator `sum_k c_k D^{alpha_k}` with constant coefficients.
#[derive(Clone, Debug, PartialEq, Serialize, Deserialize)]
pub struct DiffOp {
    terms: Vec<(MultiIndex, f64)>,
}

pub(crate) static IDENTITY: LazyLock<DiffOp> = LazyLock::new(DiffOp::identity);

impl DiffOp {
    pub fn new(terms: Vec<(MultiIndex, f64)>) -> Result<Self> {
        if terms.is_empty() {
            return Err(SgpError::InvalidArgument("operator has no terms".into()));
        }
        for (idx, c) in &terms {
            if !c.is_finite() {
                return Err(SgpError::InvalidArgument(format!(
                    "non-finite coefficient {c} in operator term {idx:?}"
                )));
            }
            if idx.total_order() > MAX_TERM_ORDER {
                return Err(SgpError::UnsupportedOperator(format!(
                    "term {idx:?} has total order {} > {MAX_TERM_ORDER}",
                    idx.total_order()
                )));
            }
        }
        Ok(DiffOp { terms })
    }

    pub fn identity() -> Self {
        DiffOp {
            terms: vec![(MultiIndex::ZERO, 1.0)],
        }
    }

    /// First derivative along `axis`.
    pub fn partial(axis: usize) -> Self {
        DiffOp {
            terms: vec![(MultiIndex::along(axis, 1), 1.0)],
        }
    }

    /// Second derivative along `axis`.
    pub fn second_partial(axis: usize) -> Self {
        DiffOp {
            terms: vec![(MultiIndex::along(axis, 2), 1.0)],
        }
    }

    /// Sum of first derivatives over the first `dim` axes.
    pub fn sum_first(dim: usize) -> Self {
        DiffOp {
            terms: (0..dim).map(|a| (MultiIndex::along(a, 1), 1.0)).collect(),
        }
    }

    pub fn laplacian(dim: usize) -> Self {
        DiffOp {
            terms: (0..dim).map(|a| (MultiIndex::along(a, 2), 1.0)).collect(),
        }
    }

    pub fn terms(&self) -> &[(MultiIndex, f64)] {
        &self.terms
    }

    /// Highest order this operator takes along `axis` in any single term.
    pub fn max_order_on(&self, axis: usize) -> u8 {
        self.terms.iter().map(|(i, _)| i.0[axis]).max().unwrap_or(0)
    }

    fn highest_axis(&self) -> Option<usize> {
        self.terms.iter().filter_map(|(i, _)| i.highest_axis()).max()
    }

    fn canonical_cmp(&self, other: &DiffOp) -> Ordering {
        let by_len = self.terms.len().cmp(&other.terms.len());
        if by_len != Ordering::Equal {
            return by_len;
        }
        for ((ia, ca), (ib, cb)) in self.terms.iter().zip(&other.terms) {
            let o = ia.cmp(ib).then(ca.total_cmp(cb));
            if o != Ordering::Equal {
                return o;
            }
        }
        Ordering::Equal
    }
}

/// A point paired with a differential operator: `u -> (L u)(point)`.
#[derive(Clone, Debug, PartialEq, Serialize, Deserialize)]
pub struct Functional {
    pub point: Vec<f64>,
    pub op: DiffOp,
}

impl Functional {
    pub fn new(point: Vec<f64>, op: DiffOp) -> Self {
        Functional { point, op }
    }

    pub fn dirac(point: Vec<f64>) -> Self {
        Functional {
            point,
            op: DiffOp::identity(),
        }
    }
}

/// Length parameters: one shared value or one per axis.
#[derive(Clone, Debug, PartialEq, Serialize, Deserialize)]
#[serde(untagged)]
pub enum Lengths {
    Scalar(f64),
    PerAxis(Vec<f64>),
}

impl Lengths {
    fn get(&self, axis: usize) -> f64 {
        match self {
            Lengths::Scalar(v) => *v,
            Lengths::PerAxis(v) => v[axis],
        }
    }

    fn axis_count(&self) -> Option<usize> {
        match self {
            Lengths::Scalar(_) => None,
            Lengths::PerAxis(v) => Some(v.len()),
        }
    }

    fn values(&self) -> Vec<f64> {
        match self {
            Lengths::Scalar(v) => vec![*v],
            Lengths::PerAxis(v) => v.clone(),
        }
    }
}

fn unit_period() -> Lengths {
    Lengths::Scalar(1.0)
}

/// Positive-definite base kernel.
///
/// * `gaussian_iso`: `exp(-|x-y|^2 / (2 sigma^2))`
/// * `gaussian_aniso`: `exp(-sum_a (x_a-y_a)^2 / sigma_a^2)`
/// * `periodic_exp`: `exp(sum_a (cos(2 pi (x_a-y_a) / p_a) - 1))`, `p_a` defaulting to 1
#[derive(Clone, Debug, PartialEq, Serialize, Deserialize)]
#[serde(tag = "type", rename_all = "snake_case")]
pub enum KernelSpec {
    GaussianIso {
        sigma: f64,
    },
    GaussianAniso {
        sigma: Vec<f64>,
    },
    PeriodicExp {
        #[serde(default = "unit_period")]
        sigma: Lengths,
    },
}

impl KernelSpec {
    pub fn gaussian_iso(sigma: f64) -> Self {
        KernelSpec::GaussianIso { sigma }
    }

    pub fn gaussian_aniso(sigma: Vec<f64>) -> Self {
        KernelSpec::GaussianAniso { sigma }
    }

    /// Periodic kernel with unit period on every axis.
    pub fn periodic() -> Self {
        KernelSpec::PeriodicExp {
            sigma: unit_period(),
        }
    }

    /// Number of axes this spec is pinned to, if any.
    pub fn axis_count(&self) -> Option<usize> {
        match self {
            KernelSpec::GaussianIso { .. } => None,
            KernelSpec::GaussianAniso { sigma } => Some(sigma.len()),
            KernelSpec::PeriodicExp { sigma } => sigma.axis_count(),
        }
    }

    /// Checks positivity of all length parameters.
    pub fn validate(&self) -> Result<()> {
        let values = match self {
            KernelSpec::GaussianIso { sigma } => vec![*sigma],
            KernelSpec::GaussianAniso { sigma } => {
                if sigma.is_empty() || sigma.len() > MAX_AXES {
                    return Err(SgpError::InvalidArgument(format!(
                        "anisotropic kernel needs 1..={MAX_AXES} lengthscales, got {}",
                        sigma.len()
                    )));
                }
                sigma.clone()
            }
            KernelSpec::PeriodicExp { sigma } => sigma.values(),
        };
        if values.iter().any(|v| !(v.is_finite() && *v > 0.0)) {
            return Err(SgpError::InvalidArgument(format!(
                "kernel lengths must be finite and positive, got {values:?}"
            )));
        }
        Ok(())
    }

    /// Same kernel with every length multiplied by `factor`. Periods are left alone.
    pub fn scaled(&self, factor: f64) -> KernelSpec {
        match self {
            KernelSpec::GaussianIso { sigma } => KernelSpec::GaussianIso {
                sigma: sigma * factor,
            },
            KernelSpec::GaussianAniso { sigma } => KernelSpec::GaussianAniso {
                sigma: sigma.iter().map(|s| s * factor).collect(),
            },
            KernelSpec::PeriodicExp { .. } => self.clone(),
        }
    }

    pub fn check_dim(&self, dim: usize) -> Result<()> {
        if dim == 0 || dim > MAX_AXES {
            return Err(SgpError::InvalidArgument(format!(
                "points must have 1..={MAX_AXES} coordinates, got {dim}"
            )));
        }
        if let Some(n) = self.axis_count() {
            if n != dim {
                return Err(SgpError::InvalidArgument(format!(
                    "kernel has {n} axes but points have {dim} coordinates"
                )));
            }
        }
        Ok(())
    }

    fn axis(&self, a: usize) -> AxisKernel {
        match self {
            KernelSpec::GaussianIso { sigma } => AxisKernel::Gaussian {
                inv_sq: 1.0 / (sigma * sigma),
            },
            KernelSpec::GaussianAniso { sigma } => AxisKernel::Gaussian {
                inv_sq: 2.0 / (sigma[a] * sigma[a]),
            },
            KernelSpec::PeriodicExp { sigma } => AxisKernel::Periodic {
                freq: 2.0 * PI / sigma.get(a),
            },
        }
    }

    /// One-dimensional factor of this kernel along `axis`, exposed for tests.
    pub fn axis_factor(&self, axis: usize) -> AxisKernel {
        self.axis(axis)
    }
}

/// A one-dimensional stationary kernel `k(s)`, `s = x - y`.
#[derive(Clone, Copy, Debug, PartialEq)]
pub enum AxisKernel {
    /// `exp(-inv_sq * s^2 / 2)`
    Gaussian { inv_sq: f64 },
    /// `exp(cos(freq * s) - 1)`
    Periodic { freq: f64 },
}

impl AxisKernel {
    /// `[k(s), k'(s), ..., k''''(s)]`, filled up to `max_order`.
    ///
    /// Evaluated at `|s|` with odd orders negated for `s < 0`, so that
    /// `k^(n)(-s) = (-1)^n k^(n)(s)` holds bit-for-bit.
    pub fn derivatives(&self, s: f64, max_order: usize) -> [f64; 5] {
        let r = s.abs();
        let mut d = [0.0; 5];
        match *self {
            AxisKernel::Gaussian { inv_sq: a } => {
                let k = (-0.5 * a * r * r).exp();
                d[0] = k;
                if max_order >= 1 {
                    d[1] = -a * r * k;
                }
                if max_order >= 2 {
                    d[2] = (a * a * r * r - a) * k;
                }
                if max_order >= 3 {
                    d[3] = (3.0 * a * a * r - a * a * a * r * r * r) * k;
                }
                if max_order >= 4 {
                    let r2 = r * r;
                    d[4] = (a * a * a * a * r2 * r2 - 6.0 * a * a * a * r2 + 3.0 * a * a) * k;
                }
            }
            AxisKernel::Periodic { freq: w } => {
                let (sn, c) = (w * r).sin_cos();
                let k = (c - 1.0).exp();
                // derivatives of g(s) = cos(w s) - 1
                let g1 = -w * sn;
                let g2 = -w * w * c;
                let g3 = w * w * w * sn;
                let g4 = w * w * w * w * c;
                d[0] = k;
                if max_order >= 1 {
                    d[1] = g1 * k;
                }
                if max_order >= 2 {
                    d[2] = (g2 + g1 * g1) * k;
                }
                if max_order >= 3 {
                    d[3] = (g3 + 3.0 * g1 * g2 + g1 * g1 * g1) * k;
                }
                if max_order >= 4 {
                    d[4] = (g4
                        + 4.0 * g1 * g3
                        + 3.0 * g2 * g2
                        + 6.0 * g1 * g1 * g2
                        + g1 * g1 * g1 * g1)
                        * k;
                }
            }
        }
        if s < 0.0 {
            d[1] = -d[1];
            d[3] = -d[3];
        }
        d
    }
}

/// `K(x, y)`.
pub fn kernel_eval(spec: &KernelSpec, x: &[f64], y: &[f64]) -> Result<f64> {
    check_pair(spec, x, y)?;
    let mut v = 1.0;
    for a in 0..x.len() {
        v *= spec.axis(a).derivatives(x[a] - y[a], 0)[0];
    }
    Ok(v)
}

/// `(L_left (x) L_right) K` at `(left.point, right.point)`.
pub fn bilinear_eval(spec: &KernelSpec, left: &Functional, right: &Functional) -> Result<f64> {
    check_pair(spec, &left.point, &right.point)?;
    check_op(&left.op, left.point.len())?;
    check_op(&right.op, right.point.len())?;
    Ok(pair_value(spec, &left.point, &left.op, &right.point, &right.op))
}

/// `(L_right K)(x, right.point)`, i.e. the bilinear form with the identity on the left.
pub fn right_functional_eval(spec: &KernelSpec, x: &[f64], right: &Functional) -> Result<f64> {
    check_pair(spec, x, &right.point)?;
    check_op(&right.op, right.point.len())?;
    Ok(pair_value(spec, x, &IDENTITY, &right.point, &right.op))
}

/// Checks that a set of functionals can be paired with each other under `spec`.
pub fn validate_functionals<'a>(
    spec: &KernelSpec,
    functionals: impl IntoIterator<Item = &'a Functional>,
) -> Result<()> {
    spec.validate()?;
    let mut dim = None;
    for f in functionals {
        let d = f.point.len();
        match dim {
            None => {
                spec.check_dim(d)?;
                dim = Some(d);
            }
            Some(prev) if prev != d => {
                return Err(SgpError::InvalidArgument(format!(
                    "mixed point dimensions {prev} and {d}"
                )))
            }
            _ => {}
        }
        check_op(&f.op, d)?;
    }
    Ok(())
}

fn check_pair(spec: &KernelSpec, x: &[f64], y: &[f64]) -> Result<()> {
    if x.len() != y.len() {
        return Err(SgpError::InvalidArgument(format!(
            "dimension mismatch: {} vs {}",
            x.len(),
            y.len()
        )));
    }
    spec.check_dim(x.len())
}

fn check_op(op: &DiffOp, dim: usize) -> Result<()> {
    if let Some(a) = op.highest_axis() {
        if a >= dim {
            return Err(SgpError::UnsupportedOperator(format!(
                "operator differentiates along axis {a} in {dim} dimensions"
            )));
        }
    }
    if op.terms.iter().any(|(i, _)| i.total_order() > MAX_TERM_ORDER) {
        return Err(SgpError::UnsupportedOperator(format!(
            "operator order exceeds {MAX_TERM_ORDER}"
        )));
    }
    Ok(())
}

fn canonical_cmp(xa: &[f64], opa: &DiffOp, xb: &[f64], opb: &DiffOp) -> Ordering {
    for (a, b) in xa.iter().zip(xb) {
        let o = a.total_cmp(b);
        if o != Ordering::Equal {
            return o;
        }
    }
    opa.canonical_cmp(opb)
}

/// Unchecked bilinear form. Inputs must have passed validation.
pub(crate) fn pair_value(spec: &KernelSpec, xa: &[f64], opa: &DiffOp, xb: &[f64], opb: &DiffOp) -> f64 {
    // Evaluate in a fixed argument order so that swapping the pair is exact.
    if canonical_cmp(xa, opa, xb, opb) == Ordering::Greater {
        return pair_value_ordered(spec, xb, opb, xa, opa);
    }
    pair_value_ordered(spec, xa, opa, xb, opb)
}

fn pair_value_ordered(spec: &KernelSpec, xa: &[f64], opa: &DiffOp, xb: &[f64], opb: &DiffOp) -> f64 {
    let dim = xa.len();
    let mut tables = [[0.0; 5]; MAX_AXES];
    for a in 0..dim {
        let order = (opa.max_order_on(a) + opb.max_order_on(a)) as usize;
        tables[a] = spec.axis(a).derivatives(xa[a] - xb[a], order);
    }
    let mut total = 0.0;
    for (ia, ca) in &opa.terms {
        for (ib, cb) in &opb.terms {
            let mut v = ca * cb;
            for a in 0..dim {
                let n = (ia.0[a] + ib.0[a]) as usize;
                let t = tables[a][n];
                v *= if ib.0[a] % 2 == 1 { -t } else { t };
            }
            total += v;
        }
    }
    total
}
