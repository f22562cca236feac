//! Variational lower bound and the lengthscale grid search built on it.

use std::f64::consts::PI;

use serde::{Deserialize, Serialize};

use crate::error::{Result, SgpError};
use crate::woodbury::LowRankInverse;

/// Coefficient in front of `z^T (gamma I + Q)^-1 z`.
#[derive(Clone, Copy, Debug, Default, PartialEq, Eq, Serialize, Deserialize)]
#[serde(rename_all = "snake_case")]
pub enum QuadCoefficient {
    #[default]
    One,
    Half,
}

impl QuadCoefficient {
    pub fn value(self) -> f64 {
        match self {
            QuadCoefficient::One => 1.0,
            QuadCoefficient::Half => 0.5,
        }
    }
}

/// The four signed contributions; [`ElboTerms::total`] is their sum.
#[derive(Clone, Copy, Debug, PartialEq, Serialize, Deserialize)]
pub struct ElboTerms {
    pub constant: f64,
    pub log_det: f64,
    pub quad: f64,
    pub trace: f64,
}

impl ElboTerms {
    pub fn total(&self) -> f64 {
        self.constant + self.log_det + self.quad + self.trace
    }
}

pub fn elbo_terms(z: &[f64], lri: &LowRankInverse, psi_diag: &[f64], coef: QuadCoefficient) -> Result<ElboTerms> {
    let n = lri.n() as f64;
    Ok(ElboTerms {
        constant: -0.5 * n * (2.0 * PI).ln(),
        log_det: -0.5 * lri.log_det(),
        quad: -coef.value() * lri.quad_form(z)?,
        trace: -lri.trace_correction(psi_diag)? / (2.0 * lri.gamma()),
    })
}

pub fn elbo(z: &[f64], lri: &LowRankInverse, psi_diag: &[f64]) -> Result<f64> {
    Ok(elbo_terms(z, lri, psi_diag, QuadCoefficient::One)?.total())
}

/// `low, low + step, ...` up to `high` inclusive (with a small tolerance).
pub fn sigma_grid(low: f64, high: f64, step: f64) -> Result<Vec<f64>> {
    if !(low > 0.0 && high >= low && step > 0.0) || !high.is_finite() {
        return Err(SgpError::InvalidConfiguration(format!(
            "hyperopt grid needs 0 < low <= high and step > 0, got low = {low}, high = {high}, step = {step}"
        )));
    }
    let count = ((high - low) / step + 1e-9).floor() as usize + 1;
    Ok((0..count).map(|k| low + k as f64 * step).collect())
}

/// What one grid cell produced.
#[derive(Clone, Debug, PartialEq, Serialize, Deserialize)]
pub struct CellOutcome {
    pub elbo: f64,
    pub iterations: usize,
    pub linf: Option<f64>,
}

#[derive(Clone, Debug, PartialEq, Serialize, Deserialize)]
pub struct GridCell {
    pub sigma: f64,
    pub elbo: Option<f64>,
    pub iterations: Option<usize>,
    pub linf_error: Option<f64>,
    /// `ok`, or the failure message.
    pub status: String,
}

/// Evaluates every cell and returns the lengthscale with the largest bound.
/// Ties go to the larger lengthscale; failed cells are kept in the table.
pub fn grid_search(sigmas: &[f64], mut eval: impl FnMut(f64) -> Result<CellOutcome>) -> Result<(f64, Vec<GridCell>)> {
    if sigmas.is_empty() {
        return Err(SgpError::InvalidConfiguration("empty lengthscale grid".into()));
    }
    let mut sorted = sigmas.to_vec();
    sorted.sort_by(f64::total_cmp);
    let mut table = Vec::with_capacity(sorted.len());
    for &s in &sorted {
        let cell = match eval(s) {
            Ok(out) if out.elbo.is_finite() => GridCell {
                sigma: s,
                elbo: Some(out.elbo),
                iterations: Some(out.iterations),
                linf_error: out.linf,
                status: "ok".into(),
            },
            Ok(out) => GridCell {
                sigma: s,
                elbo: None,
                iterations: Some(out.iterations),
                linf_error: out.linf,
                status: "non-finite elbo".into(),
            },
            Err(e) => {
                log::warn!("lengthscale {s}: {e}");
                GridCell {
                    sigma: s,
                    elbo: None,
                    iterations: None,
                    linf_error: None,
                    status: e.to_string(),
                }
            }
        };
        table.push(cell);
    }
    let best = select_best(&table)
        .ok_or_else(|| SgpError::NumericalFailure("every lengthscale in the grid failed".into()))?;
    Ok((best, table))
}

/// Argmax of the bound over successful cells, ties toward larger lengthscales.
pub fn select_best(table: &[GridCell]) -> Option<f64> {
    table
        .iter()
        .filter_map(|c| c.elbo.map(|f| (c.sigma, f)))
        .fold(None, |best: Option<(f64, f64)>, (s, f)| match best {
            Some((bs, bf)) if f < bf || (f == bf && s < bs) => Some((bs, bf)),
            _ => Some((s, f)),
        })
        .map(|(s, _)| s)
}
