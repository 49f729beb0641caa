//! Partial correlations of neighbouring knots, the Toeplitz matrix `A`, and the
//! L²-convergence rates and relaxation times of the three updating schemes.

use std::f64::consts::PI;

use nalgebra::{DMatrix, Matrix2};

use crate::blocking::Scheme;
use crate::models::{DiffusionModel, ModelKind};
use crate::{Error, Result};

/// `sinh(θa)·sinh(θb)/sinh(θc)` for `a, b ≥ 0`, `a + b ≤ c`, in exp-difference form so
/// that neither overflow nor cancellation occurs for large or small `θc`.
fn sinh_ratio(theta: f64, a: f64, b: f64, c: f64) -> f64 {
    let f = |x: f64| -(-2.0 * theta * x).exp_m1();
    0.5 * (theta * (a + b - c)).exp() * f(a) * f(b) / f(c)
}

/// Covariance of an Ornstein–Uhlenbeck bridge on `[0, T]` at times `s ≤ t`:
/// `(σ²/θ)·sinh(θs)·sinh(θ(T − t))/sinh(θT)`.
fn ou_bridge_cov(s: f64, t: f64, t_end: f64, theta: f64, sigma: f64) -> f64 {
    let (s, t) = if s <= t { (s, t) } else { (t, s) };
    sigma * sigma / theta * sinh_ratio(theta, s, t_end - t, t_end)
}

/// `Cov[(Y_s, Y_t) | Y_0, Y_T]` for the Ornstein–Uhlenbeck process
/// `dY = −θY dt + σ dW`. Independent of the pinned values.
pub fn conditional_cov_ou(s: f64, t: f64, t_end: f64, theta: f64, sigma: f64) -> Result<Matrix2<f64>> {
    if !(0.0 < s && s < t && t < t_end) {
        return Err(Error::InvalidArgs(format!("need 0 < s < t < T, got s={s}, t={t}, T={t_end}")));
    }
    if !(theta > 0.0 && sigma > 0.0) {
        return Err(Error::InvalidArgs(format!("need θ, σ > 0, got θ={theta}, σ={sigma}")));
    }
    let vs = ou_bridge_cov(s, s, t_end, theta, sigma);
    let vt = ou_bridge_cov(t, t, t_end, theta, sigma);
    let cst = ou_bridge_cov(s, t, t_end, theta, sigma);
    Ok(Matrix2::new(vs, cst, cst, vt))
}

/// Partial correlation `c(δ)` of two neighbouring knots given all others, for anchors
/// spaced `δ` apart.
///
/// Scaled Brownian motion gives 1/2 for every δ. For Ornstein–Uhlenbeck the
/// conditional covariance at `(δ, 2δ)` on `[0, 3δ]` collapses to `1/(2 cosh θδ)`.
pub fn partial_corr(model: &DiffusionModel, delta: f64) -> Result<f64> {
    if !(delta > 0.0 && delta.is_finite()) {
        return Err(Error::InvalidArgs(format!("δ must be positive, got {delta}")));
    }
    match model.kind() {
        ModelKind::ScaledBm { .. } => Ok(0.5),
        ModelKind::Ou { theta, .. } => {
            let x = theta * delta;
            let e = (-x).exp();
            Ok(e / (1.0 + e * e))
        }
        _ => Err(Error::Unsupported { op: "partial_corr", model: model.name() }),
    }
}

/// Symmetric tridiagonal `m × m` matrix with zero diagonal and off-diagonal `c`.
pub fn build_matrix_a(m: usize, c: f64) -> DMatrix<f64> {
    DMatrix::from_fn(m, m, |i, j| if i.abs_diff(j) == 1 { c } else { 0.0 })
}

/// Largest eigenvalue `2|c|·cos(π/(m+1))` of [`build_matrix_a`].
pub fn lambda_max_a(m: usize, c: f64) -> f64 {
    if m == 1 {
        return 0.0;
    }
    2.0 * c.abs() * (PI / (m as f64 + 1.0)).cos()
}

/// Full spectrum `−2c·cos(πl/(m+1))`, `l = 1..m`, in ascending order.
pub fn spectrum_a(m: usize, c: f64) -> Vec<f64> {
    let mut ev: Vec<f64> = (1..=m).map(|l| -2.0 * c * (PI * l as f64 / (m as f64 + 1.0)).cos()).collect();
    ev.sort_by(f64::total_cmp);
    ev
}

/// L²-convergence rate per sweep.
///
/// Checkerboard and lexicographic: `λ_max(A)²`. Random: `[(m − 1 + λ_max(A))/m]^m`.
pub fn convergence_rate(scheme: Scheme, m: usize, c: f64) -> Result<f64> {
    if m == 0 {
        return Err(Error::InvalidArgs("m must be at least 1".into()));
    }
    if !c.is_finite() {
        return Err(Error::InvalidArgs(format!("partial correlation {c} is not finite")));
    }
    let lambda = lambda_max_a(m, c);
    let rho = match scheme {
        Scheme::Checkerboard | Scheme::Lexicographic => lambda * lambda,
        Scheme::Random => {
            if m == 1 {
                0.0
            } else {
                ((m as f64 - 1.0 + lambda) / m as f64).powi(m as i32)
            }
        }
    };
    if rho >= 1.0 {
        return Err(Error::RateNotLessThanOne(rho));
    }
    Ok(rho)
}

#[derive(Debug, Clone, Copy, PartialEq)]
pub struct RelaxationTime {
    pub sweeps: f64,
    /// Set when `ρ ≤ 0`: consecutive sweeps are already independent.
    pub degenerate: bool,
}

/// `−1/log ρ`; `ρ ≤ 0` yields zero with the degenerate flag set.
pub fn relaxation_time(rho: f64) -> Result<RelaxationTime> {
    if !(rho < 1.0) || rho.is_nan() {
        return Err(Error::InvalidRate(rho));
    }
    if rho <= 0.0 {
        return Ok(RelaxationTime { sweeps: 0.0, degenerate: true });
    }
    Ok(RelaxationTime { sweeps: -1.0 / rho.ln(), degenerate: false })
}

#[derive(Debug, Clone, PartialEq)]
pub struct RateReport {
    pub scheme: Scheme,
    pub m: usize,
    pub t_end: f64,
    pub delta: f64,
    pub c_delta: f64,
    pub lambda_max: f64,
    pub rho: f64,
    pub relaxation_time: RelaxationTime,
}

pub fn rate_report(model: &DiffusionModel, scheme: Scheme, m: usize, t_end: f64) -> Result<RateReport> {
    if m == 0 || !(t_end > 0.0) {
        return Err(Error::InvalidArgs(format!("need m ≥ 1 and T > 0, got m={m}, T={t_end}")));
    }
    let delta = t_end / (m as f64 + 1.0);
    let c_delta = partial_corr(model, delta)?;
    let rho = convergence_rate(scheme, m, c_delta)?;
    Ok(RateReport {
        scheme,
        m,
        t_end,
        delta,
        c_delta,
        lambda_max: lambda_max_a(m, c_delta),
        rho,
        relaxation_time: relaxation_time(rho)?,
    })
}
