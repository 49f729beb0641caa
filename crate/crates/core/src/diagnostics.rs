//! Chain diagnostics: autocorrelation, effective sample size (ESS), time-adjusted ESS,
//! geometric-rate fitting and the two-sample Kolmogorov–Smirnov statistic.
//!
//! ESS follows the initial-positive-sequence rule: autocorrelations are summed up to the
//! first odd lag `t` at which `ρ̂_{t+1} + ρ̂_{t+2}` turns negative.

use rustfft::num_complex::Complex;
use rustfft::FftPlanner;

use crate::{Error, Result};

/// One scalar functional of a chain, one value per sweep.
#[derive(Debug, Clone, PartialEq)]
pub struct Series {
    pub label: String,
    pub values: Vec<f64>,
}

impl Series {
    pub fn new(label: impl Into<String>, values: Vec<f64>) -> Result<Self> {
        if values.iter().any(|v| !v.is_finite()) {
            return Err(Error::DegenerateSeries);
        }
        Ok(Self { label: label.into(), values })
    }

    pub fn len(&self) -> usize {
        self.values.len()
    }

    pub fn is_empty(&self) -> bool {
        self.values.is_empty()
    }

    pub fn ess(&self) -> Result<f64> {
        ess(&self.values)
    }
}

fn centred(values: &[f64]) -> Result<(Vec<f64>, f64)> {
    if values.iter().any(|v| !v.is_finite()) {
        return Err(Error::DegenerateSeries);
    }
    let n = values.len() as f64;
    let mean = values.iter().sum::<f64>() / n;
    let xs: Vec<f64> = values.iter().map(|v| v - mean).collect();
    let var = xs.iter().map(|x| x * x).sum::<f64>() / n;
    if !(var > 0.0) {
        return Err(Error::DegenerateSeries);
    }
    Ok((xs, var))
}

/// Biased autocovariances `γ̂_ℓ = N⁻¹ Σ x_t x_{t+ℓ}` of a centred series for all lags,
/// computed by zero-padded FFT.
fn autocovariance_all(xs: &[f64]) -> Vec<f64> {
    let n = xs.len();
    let len = (2 * n).next_power_of_two();
    let mut buf: Vec<Complex<f64>> = xs.iter().map(|&x| Complex::new(x, 0.0)).collect();
    buf.resize(len, Complex::new(0.0, 0.0));
    let mut planner = FftPlanner::new();
    planner.plan_fft_forward(len).process(&mut buf);
    for z in buf.iter_mut() {
        *z = Complex::new(z.norm_sqr(), 0.0);
    }
    planner.plan_fft_inverse(len).process(&mut buf);
    let scale = (len * n) as f64;
    buf[..n].iter().map(|z| z.re / scale).collect()
}

/// Biased (divide-by-N) autocorrelations `ρ̂_0 = 1, …, ρ̂_max_lag`.
pub fn autocorrelation(values: &[f64], max_lag: usize) -> Result<Vec<f64>> {
    if 2 * max_lag >= values.len() {
        return Err(Error::InvalidArgs(format!(
            "max_lag {max_lag} must be below half the series length {}",
            values.len()
        )));
    }
    let (xs, var) = centred(values)?;
    let gamma = autocovariance_all(&xs);
    Ok(gamma[..=max_lag].iter().map(|g| g / var).collect())
}

/// Integrated autocorrelation time `1 + 2Σρ̂_t` under the initial-positive-sequence
/// truncation.
fn integrated_time(rho: &[f64]) -> f64 {
    let n = rho.len();
    let mut sum = 0.0;
    let mut t = 1;
    while t < n {
        sum += rho[t];
        // Stop after odd t once the next adjacent pair goes negative.
        if t % 2 == 1 {
            let next = rho.get(t + 1).copied().unwrap_or(0.0) + rho.get(t + 2).copied().unwrap_or(0.0);
            if next < 0.0 || t + 2 >= n {
                break;
            }
        }
        t += 1;
    }
    1.0 + 2.0 * sum
}

/// Single-chain effective sample size, clamped to `[1, N]`.
pub fn ess(values: &[f64]) -> Result<f64> {
    let n = values.len();
    if n < 4 {
        return Err(Error::InvalidArgs(format!("ESS needs at least 4 values, got {n}")));
    }
    let (xs, var) = centred(values)?;
    let rho: Vec<f64> = autocovariance_all(&xs).iter().map(|g| g / var).collect();
    let tau = integrated_time(&rho);
    Ok((n as f64 / tau).clamp(1.0, n as f64))
}

/// ESS of several chains of the same functional, pooling within-chain autocovariances
/// (no between-chain variance term).
pub fn ess_pooled(chains: &[&[f64]]) -> Result<f64> {
    if chains.is_empty() {
        return Err(Error::InvalidArgs("no chains supplied".into()));
    }
    let n = chains.iter().map(|c| c.len()).min().unwrap();
    if n < 4 {
        return Err(Error::InvalidArgs(format!("ESS needs at least 4 values per chain, got {n}")));
    }
    let mut gamma = vec![0.0; n];
    let mut var = 0.0;
    for chain in chains {
        let (xs, v) = centred(&chain[..n])?;
        for (acc, g) in gamma.iter_mut().zip(autocovariance_all(&xs)) {
            *acc += g;
        }
        var += v;
    }
    let rho: Vec<f64> = gamma.iter().map(|g| g / var).collect();
    let total = (n * chains.len()) as f64;
    Ok((total / integrated_time(&rho)).clamp(1.0, total))
}

/// Time-adjusted ESS: independent samples per second of wall-clock.
pub fn taess(values: &[f64], elapsed_seconds: f64) -> Result<f64> {
    if !(elapsed_seconds > 0.0 && elapsed_seconds.is_finite()) {
        return Err(Error::InvalidArgs(format!("elapsed time must be positive, got {elapsed_seconds}")));
    }
    Ok(ess(values)? / elapsed_seconds)
}

/// Two-sample Kolmogorov–Smirnov statistic `sup |F_a − F_b|`.
pub fn ks_statistic(a: &[f64], b: &[f64]) -> f64 {
    assert!(!a.is_empty() && !b.is_empty(), "KS statistic needs nonempty samples");
    let mut a = a.to_vec();
    let mut b = b.to_vec();
    a.sort_by(f64::total_cmp);
    b.sort_by(f64::total_cmp);
    let (na, nb) = (a.len() as f64, b.len() as f64);
    let (mut i, mut j) = (0, 0);
    let mut d: f64 = 0.0;
    while i < a.len() && j < b.len() {
        let x = a[i].min(b[j]);
        while i < a.len() && a[i] <= x {
            i += 1;
        }
        while j < b.len() && b[j] <= x {
            j += 1;
        }
        d = d.max((i as f64 / na - j as f64 / nb).abs());
    }
    d
}

/// Asymptotic critical value of the two-sample KS statistic at level `alpha`:
/// `sqrt(−ln(α/2)/2) · sqrt((n1 + n2)/(n1 n2))`.
pub fn ks_critical_value(alpha: f64, n1: usize, n2: usize) -> f64 {
    let c = (-(alpha / 2.0).ln() / 2.0).sqrt();
    let (n1, n2) = (n1 as f64, n2 as f64);
    c * ((n1 + n2) / (n1 * n2)).sqrt()
}

pub const RATE_FIT_NOISE_FLOOR: f64 = 0.05;

/// Geometric decay rate `r` of `ρ̂_ℓ ≈ r^ℓ`: least-squares slope of `log ρ̂_ℓ` against
/// `ℓ` over the leading lags `ℓ ≥ 1` that stay above the noise floor, through the
/// origin since `ρ̂_0 = 1`.
pub fn fit_geometric_rate(autocorr: &[f64]) -> Result<f64> {
    let retained: Vec<(f64, f64)> = autocorr
        .iter()
        .enumerate()
        .skip(1)
        .take_while(|(_, &r)| r > RATE_FIT_NOISE_FLOOR)
        .map(|(l, &r)| (l as f64, r.ln()))
        .collect();
    if retained.len() < 3 {
        return Err(Error::InsufficientSignal { retained: retained.len() });
    }
    let sxy: f64 = retained.iter().map(|(l, y)| l * y).sum();
    let sxx: f64 = retained.iter().map(|(l, _)| l * l).sum();
    Ok((sxy / sxx).exp().min(1.0 - f64::EPSILON))
}

/// Fits the rate from the autocorrelation of a series, using lags up to `max_lag`.
pub fn fitted_rate(values: &[f64], max_lag: usize) -> Result<f64> {
    let max_lag = max_lag.min(values.len().saturating_sub(1) / 2);
    fit_geometric_rate(&autocorrelation(values, max_lag)?)
}
