//! Cost models in relative units: per-sweep cost, cost per independent sample, and the
//! knot-count rule `m = c1·T^(1+χ1)`.

use crate::analysis::rates::rate_report;
use crate::blocking::Scheme;
use crate::bridge::expected_cost_rej;
use crate::models::DiffusionModel;
use crate::{Error, Result};

/// Unit constants of the cost model. Only slopes and ratios are meaningful.
#[derive(Debug, Clone, Copy, PartialEq)]
pub struct CostConstants {
    pub c5: f64,
}

impl Default for CostConstants {
    fn default() -> Self {
        Self { c5: 1.0 }
    }
}

fn check(t_end: f64, m: usize) -> Result<f64> {
    if m == 0 || !(t_end > 0.0 && t_end.is_finite()) {
        return Err(Error::InvalidArgs(format!("need m ≥ 1 and T > 0, got m={m}, T={t_end}")));
    }
    Ok(t_end / (m as f64 + 1.0))
}

/// `m · C_rej(2δ)`: one bridge of duration `2δ` per knot, with centred endpoints.
pub fn cost_sweep(model: &DiffusionModel, t_end: f64, m: usize, consts: &CostConstants) -> Result<f64> {
    let delta = check(t_end, m)?;
    let span = if m == 1 { t_end } else { 2.0 * delta };
    Ok(consts.c5 * m as f64 * expected_cost_rej(model, span, 0.0, 0.0)?)
}

/// Sweeps per independent sample times the cost of a sweep. The relaxation time is
/// floored at one sweep, so `m = 1` gives back `C_rej(T)`.
pub fn cost_blocking(
    model: &DiffusionModel,
    t_end: f64,
    m: usize,
    scheme: Scheme,
    consts: &CostConstants,
) -> Result<f64> {
    let report = rate_report(model, scheme, m, t_end)?;
    Ok(report.relaxation_time.sweeps.max(1.0) * cost_sweep(model, t_end, m, consts)?)
}

/// `⌈c1·T^(1+χ1)⌉`.
pub fn optimal_num_knots(t_end: f64, c1: f64, chi1: f64) -> Result<usize> {
    if !(t_end > 0.0 && c1 > 0.0 && chi1 >= 0.0) {
        return Err(Error::InvalidArgs(format!("need T > 0, c1 > 0, χ1 ≥ 0; got T={t_end}, c1={c1}, χ1={chi1}")));
    }
    // Guard against 10.000000000000002-style round-up.
    let x = c1 * t_end.powf(1.0 + chi1);
    Ok(((x * (1.0 - 1e-12)).ceil() as usize).max(1))
}

pub const DEFAULT_C1: f64 = 10.0;
pub const DEFAULT_CHI1: f64 = 0.0;

/// Exhaustive minimisation of [`cost_blocking`] over `m ∈ 1..=m_max`.
pub fn minimising_num_knots(
    model: &DiffusionModel,
    t_end: f64,
    scheme: Scheme,
    m_max: usize,
    consts: &CostConstants,
) -> Result<(usize, f64)> {
    let mut best = (0, f64::INFINITY);
    for m in 1..=m_max {
        let c = cost_blocking(model, t_end, m, scheme, consts)?;
        if c < best.1 {
            best = (m, c);
        }
    }
    Ok(best)
}
