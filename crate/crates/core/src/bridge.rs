//! Brownian-bridge proposals and path-space rejection sampling.
//!
//! A proposal `Y°` is a Brownian bridge between the (Lamperti-reduced) endpoints and is
//! accepted with probability `exp{−∫(φ(Y°_t) − Φ) dt}`. Two ways of deciding acceptance:
//!
//! - **approximate**: simulate `Y°` on a constant-width mesh and integrate with the
//!   trapezoid rule. The proposal is built left to right against an `Exp(1)` threshold,
//!   so a rejection is usually detected long before the right endpoint.
//! - **exact**: Poisson thinning. With `M = sup φ − Φ`, scatter a Poisson process of
//!   rate `M` on `[t_a, t_b] × [0, M]`, reveal `Y°` only at those times, and accept iff
//!   every point lies above the graph of `φ(Y°) − Φ`.
//!
//! Paths are returned in original coordinates with the requested endpoints copied in
//! bit-exactly.

use std::f64::consts::PI;

use rand::Rng;
use rand_distr::{Distribution, Exp1, Poisson, StandardNormal};

use crate::models::DiffusionModel;
use crate::{Error, Result};

pub const DEFAULT_MESH_WIDTH: f64 = 1e-3;
pub const DEFAULT_MAX_PROPOSALS: u64 = 10_000_000;

#[derive(Debug, Clone, Copy, PartialEq, Eq, Hash)]
pub enum SamplerVariant {
    Approximate,
    Exact,
}

#[derive(Debug, Clone, Copy, PartialEq, Eq)]
pub struct PathMeta {
    pub proposals_used: u64,
    pub variant: SamplerVariant,
}

#[derive(Debug, Clone, PartialEq)]
pub struct Path {
    pub times: Vec<f64>,
    pub values: Vec<f64>,
    pub meta: PathMeta,
}

impl Path {
    pub fn new(times: Vec<f64>, values: Vec<f64>, meta: PathMeta) -> Result<Self> {
        if times.len() < 2 || times.len() != values.len() {
            return Err(Error::InvalidArgs(format!(
                "path needs at least two points and matching lengths ({} times, {} values)",
                times.len(),
                values.len()
            )));
        }
        if times.windows(2).any(|w| !(w[1] > w[0])) {
            return Err(Error::InvalidArgs("path times must be strictly increasing".into()));
        }
        Ok(Self { times, values, meta })
    }

    pub fn start(&self) -> (f64, f64) {
        (self.times[0], self.values[0])
    }

    pub fn end(&self) -> (f64, f64) {
        let n = self.times.len() - 1;
        (self.times[n], self.values[n])
    }

    /// Linear interpolation; exact on mesh points. Clamps outside the time range.
    pub fn value_at(&self, t: f64) -> f64 {
        let ts = &self.times;
        if t <= ts[0] {
            return self.values[0];
        }
        let n = ts.len() - 1;
        if t >= ts[n] {
            return self.values[n];
        }
        let j = ts.partition_point(|&s| s <= t);
        let (t0, t1) = (ts[j - 1], ts[j]);
        if t == t0 {
            return self.values[j - 1];
        }
        let w = (t - t0) / (t1 - t0);
        self.values[j - 1] + w * (self.values[j] - self.values[j - 1])
    }

    /// Trapezoid integral of the trajectory.
    pub fn integral(&self) -> f64 {
        self.times.windows(2).zip(self.values.windows(2)).map(|(t, v)| 0.5 * (v[0] + v[1]) * (t[1] - t[0])).sum()
    }
}

#[derive(Debug, Clone, Copy, PartialEq, Eq, Default)]
pub enum MeshPolicy {
    #[default]
    ConstantWidth,
}

/// Target mesh spacing; the realised spacing on `[t_a, t_b]` is
/// `(t_b − t_a) / ⌈(t_b − t_a)/h⌉ ≤ h`.
#[derive(Debug, Clone, Copy, PartialEq)]
pub struct MeshSpec {
    width: f64,
    pub policy: MeshPolicy,
}

impl Default for MeshSpec {
    fn default() -> Self {
        Self { width: DEFAULT_MESH_WIDTH, policy: MeshPolicy::ConstantWidth }
    }
}

impl MeshSpec {
    pub fn new(width: f64) -> Result<Self> {
        if !(width.is_finite() && width > 0.0) {
            return Err(Error::InvalidArgs(format!("mesh width must be positive, got {width}")));
        }
        Ok(Self { width, policy: MeshPolicy::ConstantWidth })
    }

    pub fn width(&self) -> f64 {
        self.width
    }

    pub fn steps(&self, length: f64) -> usize {
        // The small slack keeps e.g. 0.5 / 0.001 from rounding up to 501.
        ((length / self.width) * (1.0 - 1e-12)).ceil().max(1.0) as usize
    }

    pub fn times(&self, t_a: f64, t_b: f64) -> Result<Vec<f64>> {
        check_interval(t_a, t_b)?;
        let n = self.steps(t_b - t_a);
        let dt = (t_b - t_a) / n as f64;
        let mut times: Vec<f64> = (0..n).map(|i| t_a + i as f64 * dt).collect();
        times.push(t_b);
        Ok(times)
    }
}

fn check_interval(t_a: f64, t_b: f64) -> Result<()> {
    if t_a.is_finite() && t_b.is_finite() && t_b > t_a {
        Ok(())
    } else {
        Err(Error::DegenerateInterval { t_a, t_b })
    }
}

/// Fills `values[1..n-1]` with a Brownian bridge pinned at `values[0]` and
/// `values[n-1]`, by sequential Gaussian conditioning from left to right.
pub fn fill_brownian_bridge<R: Rng + ?Sized>(times: &[f64], values: &mut [f64], rng: &mut R) {
    let n = times.len();
    debug_assert_eq!(n, values.len());
    if n < 3 {
        return;
    }
    let (t_end, v_end) = (times[n - 1], values[n - 1]);
    for i in 1..n - 1 {
        let (t, v) = (times[i - 1], values[i - 1]);
        let remaining = t_end - t;
        let dt = times[i] - t;
        let mean = v + (v_end - v) * dt / remaining;
        let var = dt * (t_end - times[i]) / remaining;
        let z: f64 = StandardNormal.sample(rng);
        values[i] = mean + var.sqrt() * z;
    }
}

pub fn sample_brownian_bridge<R: Rng + ?Sized>(
    x0: f64,
    x_t: f64,
    t_a: f64,
    t_b: f64,
    mesh: &MeshSpec,
    rng: &mut R,
) -> Result<Path> {
    let times = mesh.times(t_a, t_b)?;
    let mut values = vec![0.0; times.len()];
    values[0] = x0;
    *values.last_mut().unwrap() = x_t;
    fill_brownian_bridge(&times, &mut values, rng);
    Ok(Path { times, values, meta: PathMeta { proposals_used: 1, variant: SamplerVariant::Approximate } })
}

/// `log p(Y) = −∫(φ(Y_t) − Φ) dt` by the trapezoid rule over the path's own mesh.
pub fn log_accept_prob_approx(path: &Path, model: &DiffusionModel) -> Result<f64> {
    let floor = model.phi_lower_bound()?;
    let g: Vec<f64> = path.values.iter().map(|&x| model.phi(model.to_reduced(x)) - floor).collect();
    let integral: f64 = path.times.windows(2).zip(g.windows(2)).map(|(t, g)| 0.5 * (g[0] + g[1]) * (t[1] - t[0])).sum();
    Ok(-integral.max(0.0))
}

/// One approximate proposal on `times` in reduced coordinates; `y[0]` and `y[n-1]` hold
/// the endpoints. Returns whether it was accepted.
fn approximate_proposal<R: Rng + ?Sized>(
    model: &DiffusionModel,
    floor: f64,
    times: &[f64],
    y: &mut [f64],
    rng: &mut R,
) -> bool {
    let threshold: f64 = Exp1.sample(rng);
    let n = times.len();
    let (t_end, y_end) = (times[n - 1], y[n - 1]);
    let mut integral = 0.0;
    let mut g_prev = model.phi(y[0]) - floor;
    for i in 1..n {
        let dt = times[i] - times[i - 1];
        if i < n - 1 {
            let remaining = t_end - times[i - 1];
            let mean = y[i - 1] + (y_end - y[i - 1]) * dt / remaining;
            let var = dt * (t_end - times[i]) / remaining;
            let z: f64 = StandardNormal.sample(rng);
            y[i] = mean + var.sqrt() * z;
        }
        let g = model.phi(y[i]) - floor;
        integral += 0.5 * (g_prev + g) * dt;
        if integral > threshold {
            return false;
        }
        g_prev = g;
    }
    true
}

/// Rejection-samples the interior of `values` (original coordinates) on the given
/// times, keeping `values[0]` and `values[n-1]`. Returns the number of proposals used.
pub fn rejection_fill<R: Rng + ?Sized>(
    model: &DiffusionModel,
    times: &[f64],
    values: &mut [f64],
    max_proposals: u64,
    rng: &mut R,
) -> Result<u64> {
    let n = times.len();
    if n < 2 || n != values.len() {
        return Err(Error::InvalidArgs("rejection_fill needs matching times and values".into()));
    }
    check_interval(times[0], times[n - 1])?;
    let floor = model.phi_lower_bound()?;
    let (x0, x_t) = (values[0], values[n - 1]);
    let mut y = vec![0.0; n];
    y[0] = model.to_reduced(x0);
    y[n - 1] = model.to_reduced(x_t);
    for proposal in 1..=max_proposals {
        if approximate_proposal(model, floor, times, &mut y, rng) {
            for i in 1..n - 1 {
                values[i] = model.from_reduced(y[i]);
            }
            return Ok(proposal);
        }
    }
    Err(Error::BudgetExceeded { max_proposals })
}

/// Approximate path-space rejection sampler on a constant-width mesh.
#[allow(clippy::too_many_arguments)]
pub fn sample_bridge_rejection<R: Rng + ?Sized>(
    model: &DiffusionModel,
    x0: f64,
    x_t: f64,
    t_a: f64,
    t_b: f64,
    mesh: &MeshSpec,
    max_proposals: u64,
    rng: &mut R,
) -> Result<Path> {
    let times = mesh.times(t_a, t_b)?;
    let mut values = vec![0.0; times.len()];
    values[0] = x0;
    *values.last_mut().unwrap() = x_t;
    let proposals_used = rejection_fill(model, &times, &mut values, max_proposals, rng)?;
    Ok(Path { times, values, meta: PathMeta { proposals_used, variant: SamplerVariant::Approximate } })
}

/// Exact (Poisson-thinning) sampler; returns the accepted skeleton plus endpoints.
#[allow(clippy::too_many_arguments)]
pub fn sample_bridge_exact<R: Rng + ?Sized>(
    model: &DiffusionModel,
    x0: f64,
    x_t: f64,
    t_a: f64,
    t_b: f64,
    phi_upper_bound: f64,
    max_proposals: u64,
    rng: &mut R,
) -> Result<Path> {
    sample_bridge_exact_through(model, x0, x_t, t_a, t_b, phi_upper_bound, &[], max_proposals, rng)
}

/// As [`sample_bridge_exact`], additionally revealing the accepted bridge at
/// `required_times` (e.g. the anchors inside a block). Times outside `(t_a, t_b)` are
/// ignored.
#[allow(clippy::too_many_arguments)]
pub fn sample_bridge_exact_through<R: Rng + ?Sized>(
    model: &DiffusionModel,
    x0: f64,
    x_t: f64,
    t_a: f64,
    t_b: f64,
    phi_upper_bound: f64,
    required_times: &[f64],
    max_proposals: u64,
    rng: &mut R,
) -> Result<Path> {
    check_interval(t_a, t_b)?;
    let floor = model.phi_lower_bound()?;
    let sup = model.phi_upper_bound()?;
    if !(phi_upper_bound >= sup) || !phi_upper_bound.is_finite() {
        return Err(Error::InvalidArgs(format!("phi upper bound {phi_upper_bound} is below sup phi = {sup}")));
    }
    let height = phi_upper_bound - floor;
    let mean_points = height * (t_b - t_a);
    let poisson = if mean_points > 0.0 {
        Some(Poisson::new(mean_points).map_err(|e| Error::InvalidArgs(e.to_string()))?)
    } else {
        None
    };
    let (y0, y_t) = (model.to_reduced(x0), model.to_reduced(x_t));

    let mut fixed: Vec<f64> = required_times.iter().copied().filter(|&t| t > t_a && t < t_b).collect();
    fixed.sort_by(f64::total_cmp);
    fixed.dedup();

    // (time, mark) with mark = NaN for revealed-only points.
    let mut points: Vec<(f64, f64)> = Vec::new();
    for proposal in 1..=max_proposals {
        points.clear();
        let kappa = poisson.as_ref().map_or(0, |p| p.sample(rng) as usize);
        for _ in 0..kappa {
            let t = rng.random_range(t_a..t_b);
            let mark = rng.random::<f64>() * height;
            points.push((t, mark));
        }
        points.extend(fixed.iter().map(|&t| (t, f64::NAN)));
        points.sort_by(|a, b| a.0.total_cmp(&b.0));

        let mut values = Vec::with_capacity(points.len() + 2);
        let (mut t_prev, mut y_prev) = (t_a, y0);
        let mut accepted = true;
        for &(t, mark) in &points {
            let remaining = t_b - t_prev;
            let dt = t - t_prev;
            let mean = y_prev + (y_t - y_prev) * dt / remaining;
            let var = (dt * (t_b - t) / remaining).max(0.0);
            let z: f64 = StandardNormal.sample(rng);
            let y = mean + var.sqrt() * z;
            if !mark.is_nan() && mark < model.phi(y) - floor {
                accepted = false;
                break;
            }
            values.push(y);
            t_prev = t;
            y_prev = y;
        }
        if accepted {
            let mut times = Vec::with_capacity(points.len() + 2);
            times.push(t_a);
            times.extend(points.iter().map(|p| p.0));
            times.push(t_b);
            let mut xs = Vec::with_capacity(times.len());
            xs.push(x0);
            xs.extend(values.iter().map(|&y| model.from_reduced(y)));
            xs.push(x_t);
            dedup_times(&mut times, &mut xs);
            return Ok(Path {
                times,
                values: xs,
                meta: PathMeta { proposals_used: proposal, variant: SamplerVariant::Exact },
            });
        }
    }
    Err(Error::BudgetExceeded { max_proposals })
}

/// Drops zero-length steps (coincident Poisson times) so the path stays strictly
/// increasing.
fn dedup_times(times: &mut Vec<f64>, values: &mut Vec<f64>) {
    let mut keep = 1;
    for i in 1..times.len() {
        if times[i] > times[keep - 1] {
            times[keep] = times[i];
            values[keep] = values[i];
            keep += 1;
        } else if i == times.len() - 1 {
            // Never drop the right endpoint.
            times[keep - 1] = times[i];
            values[keep - 1] = values[i];
        }
    }
    times.truncate(keep);
    values.truncate(keep);
}

/// Mean acceptance probability of a Brownian-bridge proposal over a horizon `t`:
/// `exp{A(y0) − A(yT)} · p_t(y0, yT)/q_t(y0, yT) · exp{Φ t}` in reduced coordinates.
pub fn expected_acceptance(model: &DiffusionModel, t: f64, x0: f64, x_t: f64) -> Result<f64> {
    if !(t > 0.0 && t.is_finite()) {
        return Err(Error::InvalidArgs(format!("horizon must be positive, got {t}")));
    }
    if !model.is_gaussian() {
        return Err(Error::Unsupported { op: "expected_acceptance", model: model.name() });
    }
    let (y0, y_t) = (model.to_reduced(x0), model.to_reduced(x_t));
    let log_p = model.reduced_transition_density(t, y0, y_t)?.ln();
    let log_q = -0.5 * (2.0 * PI * t).ln() - (y_t - y0).powi(2) / (2.0 * t);
    let log_c7 = model.potential(y0) - model.potential(y_t);
    let floor = model.phi_lower_bound()?;
    Ok((log_c7 + log_p - log_q + floor * t).exp().min(1.0))
}

/// Expected cost of one unblocked draw in units of simulated time: `t / E[p]`.
pub fn expected_cost_rej(model: &DiffusionModel, t: f64, x0: f64, x_t: f64) -> Result<f64> {
    if !model.is_gaussian() {
        return Err(Error::Unsupported { op: "expected_cost_rej", model: model.name() });
    }
    Ok(t / expected_acceptance(model, t, x0, x_t)?)
}
