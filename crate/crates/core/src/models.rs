//! Scalar diffusion laws `dX = b(X) dt + σ dW`.
//!
//! Samplers work in unit-volatility coordinates `y = x / σ` (the Lamperti map for
//! constant σ), where the law becomes `dY = α(Y) dt + dW` with `α(y) = b(σy) / σ`.
//! Everything below that takes a `y` argument is in those coordinates; transition
//! densities take original coordinates.

use std::f64::consts::PI;
use std::fmt;
use std::sync::{Arc, OnceLock};

use crate::{Error, Result};

/// Grid resolution used to bound φ for periodic drifts.
const PHI_GRID_POINTS: usize = 100_000;

/// A user-supplied unit-volatility drift with its potential.
///
/// The samplers trust these closures to satisfy `A' = α`, `α ∈ C¹` and
/// `phi_lower ≤ φ`; none of this is verified.
#[derive(Clone)]
pub struct CustomDrift {
    pub alpha: Arc<dyn Fn(f64) -> f64 + Send + Sync>,
    pub alpha_prime: Arc<dyn Fn(f64) -> f64 + Send + Sync>,
    pub potential: Arc<dyn Fn(f64) -> f64 + Send + Sync>,
    pub phi_lower: Option<f64>,
    pub phi_upper: Option<f64>,
}

impl fmt::Debug for CustomDrift {
    fn fmt(&self, f: &mut fmt::Formatter<'_>) -> fmt::Result {
        f.debug_struct("CustomDrift")
            .field("phi_lower", &self.phi_lower)
            .field("phi_upper", &self.phi_upper)
            .finish_non_exhaustive()
    }
}

#[derive(Debug, Clone)]
pub enum ModelKind {
    /// `dX = μ dt + σ dW`.
    ScaledBm { sigma: f64, mu: f64 },
    /// `dX = −θ X dt + σ dW`.
    Ou { theta: f64, sigma: f64 },
    /// `dX = (a − b sin(ωX)) dt + σ dW`.
    Sine { a: f64, b: f64, omega: f64, sigma: f64 },
    /// Already in unit-volatility coordinates; unverified.
    Custom(CustomDrift),
}

#[derive(Debug, Clone, Copy, PartialEq)]
struct PhiRange {
    lower: f64,
    upper: f64,
}

#[derive(Debug, Clone)]
pub struct DiffusionModel {
    kind: ModelKind,
    dim: usize,
    phi_range: OnceLock<PhiRange>,
}

fn check_positive(name: &str, v: f64) -> Result<()> {
    if v.is_finite() && v > 0.0 {
        Ok(())
    } else {
        Err(Error::InvalidArgs(format!("{name} must be positive and finite, got {v}")))
    }
}

fn check_finite(name: &str, v: f64) -> Result<()> {
    if v.is_finite() {
        Ok(())
    } else {
        Err(Error::InvalidArgs(format!("{name} must be finite, got {v}")))
    }
}

fn gaussian_pdf(x: f64, mean: f64, var: f64) -> f64 {
    let z = x - mean;
    (-0.5 * z * z / var).exp() / (2.0 * PI * var).sqrt()
}

impl DiffusionModel {
    pub fn scaled_bm(sigma: f64, mu: f64) -> Result<Self> {
        check_positive("sigma", sigma)?;
        check_finite("mu", mu)?;
        Ok(Self::from_kind(ModelKind::ScaledBm { sigma, mu }))
    }

    pub fn ou(theta: f64, sigma: f64) -> Result<Self> {
        check_positive("theta", theta)?;
        check_positive("sigma", sigma)?;
        Ok(Self::from_kind(ModelKind::Ou { theta, sigma }))
    }

    pub fn sine(a: f64, b: f64, omega: f64, sigma: f64) -> Result<Self> {
        check_finite("a", a)?;
        check_finite("b", b)?;
        check_positive("omega", omega)?;
        check_positive("sigma", sigma)?;
        Ok(Self::from_kind(ModelKind::Sine { a, b, omega, sigma }))
    }

    /// `dX = (2 − 2 sin 8X) dt + ½ dW`.
    pub fn sine_default() -> Self {
        Self::from_kind(ModelKind::Sine { a: 2.0, b: 2.0, omega: 8.0, sigma: 0.5 })
    }

    pub fn custom(drift: CustomDrift) -> Self {
        Self::from_kind(ModelKind::Custom(drift))
    }

    fn from_kind(kind: ModelKind) -> Self {
        Self { kind, dim: 1, phi_range: OnceLock::new() }
    }

    /// Carries a symbolic dimension for the cost formulas; samplers are scalar.
    pub fn with_dim(mut self, dim: usize) -> Result<Self> {
        if dim == 0 {
            return Err(Error::InvalidArgs("dimension must be positive".into()));
        }
        self.dim = dim;
        Ok(self)
    }

    pub fn kind(&self) -> &ModelKind {
        &self.kind
    }

    pub fn dim(&self) -> usize {
        self.dim
    }

    pub fn name(&self) -> &'static str {
        match self.kind {
            ModelKind::ScaledBm { .. } => "scaled_bm",
            ModelKind::Ou { .. } => "ou",
            ModelKind::Sine { .. } => "sine",
            ModelKind::Custom(_) => "custom",
        }
    }

    /// Custom drifts are taken on trust.
    pub fn is_verified(&self) -> bool {
        !matches!(self.kind, ModelKind::Custom(_))
    }

    pub fn is_gaussian(&self) -> bool {
        matches!(self.kind, ModelKind::ScaledBm { .. } | ModelKind::Ou { .. })
    }

    pub fn sigma(&self) -> f64 {
        match self.kind {
            ModelKind::ScaledBm { sigma, .. } | ModelKind::Ou { sigma, .. } | ModelKind::Sine { sigma, .. } => sigma,
            ModelKind::Custom(_) => 1.0,
        }
    }

    pub fn to_reduced(&self, x: f64) -> f64 {
        x / self.sigma()
    }

    pub fn from_reduced(&self, y: f64) -> f64 {
        y * self.sigma()
    }

    /// Drift `b(x)` of the SDE in original coordinates.
    pub fn sde_drift(&self, x: f64) -> f64 {
        match &self.kind {
            ModelKind::ScaledBm { mu, .. } => *mu,
            ModelKind::Ou { theta, .. } => -theta * x,
            ModelKind::Sine { a, b, omega, .. } => a - b * (omega * x).sin(),
            ModelKind::Custom(c) => (c.alpha)(x),
        }
    }

    /// Unit-volatility drift `α(y) = b(σy)/σ`.
    pub fn drift(&self, y: f64) -> f64 {
        match &self.kind {
            ModelKind::ScaledBm { sigma, mu } => mu / sigma,
            ModelKind::Ou { theta, .. } => -theta * y,
            ModelKind::Sine { a, b, omega, sigma } => (a - b * (omega * sigma * y).sin()) / sigma,
            ModelKind::Custom(c) => (c.alpha)(y),
        }
    }

    /// `α'(y)`, i.e. the Laplacian of the potential in one dimension.
    pub fn drift_derivative(&self, y: f64) -> f64 {
        match &self.kind {
            ModelKind::ScaledBm { .. } => 0.0,
            ModelKind::Ou { theta, .. } => -theta,
            ModelKind::Sine { b, omega, sigma, .. } => -b * omega * (omega * sigma * y).cos(),
            ModelKind::Custom(c) => (c.alpha_prime)(y),
        }
    }

    /// Potential `A` with `A' = α`.
    pub fn potential(&self, y: f64) -> f64 {
        match &self.kind {
            ModelKind::ScaledBm { sigma, mu } => mu / sigma * y,
            ModelKind::Ou { theta, .. } => -0.5 * theta * y * y,
            ModelKind::Sine { a, b, omega, sigma } => {
                a / sigma * y + b / (sigma * sigma * omega) * (omega * sigma * y).cos()
            }
            ModelKind::Custom(c) => (c.potential)(y),
        }
    }

    /// `φ(y) = ½(α(y)² + α'(y))`.
    #[inline]
    pub fn phi(&self, y: f64) -> f64 {
        let a = self.drift(y);
        0.5 * (a * a + self.drift_derivative(y))
    }

    /// `Φ = inf φ`.
    pub fn phi_lower_bound(&self) -> Result<f64> {
        match &self.kind {
            // Written exactly as `phi` evaluates it, so φ − Φ is identically zero.
            ModelKind::ScaledBm { sigma, mu } => {
                let a = mu / sigma;
                Ok(0.5 * (a * a + 0.0))
            }
            ModelKind::Ou { theta, .. } => Ok(-0.5 * theta),
            ModelKind::Sine { .. } => Ok(self.sine_phi_range().lower),
            ModelKind::Custom(c) => c.phi_lower.filter(|v| v.is_finite()).ok_or(Error::Unbounded),
        }
    }

    /// `sup φ`, needed by the Poisson-thinning sampler.
    pub fn phi_upper_bound(&self) -> Result<f64> {
        match &self.kind {
            ModelKind::ScaledBm { .. } => self.phi_lower_bound(),
            ModelKind::Ou { .. } => Err(Error::UnboundedPhi),
            ModelKind::Sine { .. } => Ok(self.sine_phi_range().upper),
            ModelKind::Custom(c) => c.phi_upper.filter(|v| v.is_finite()).ok_or(Error::UnboundedPhi),
        }
    }

    /// Bounds φ over one period by a dense grid widened by a Lipschitz margin, so
    /// the result brackets the true infimum and supremum.
    fn sine_phi_range(&self) -> PhiRange {
        *self.phi_range.get_or_init(|| {
            let ModelKind::Sine { a, b, omega, sigma } = self.kind else {
                unreachable!("only called for the sine model")
            };
            // φ as a function of the phase u = ωσy.
            let phi_u = |u: f64| {
                let drift = (a - b * u.sin()) / sigma;
                0.5 * (drift * drift - b * omega * u.cos())
            };
            let step = 2.0 * PI / PHI_GRID_POINTS as f64;
            let (mut lo, mut hi) = (f64::INFINITY, f64::NEG_INFINITY);
            for i in 0..PHI_GRID_POINTS {
                let v = phi_u(i as f64 * step);
                lo = lo.min(v);
                hi = hi.max(v);
            }
            let lipschitz = (a.abs() + b.abs()) * b.abs() / (sigma * sigma) + 0.5 * b.abs() * omega;
            let margin = lipschitz * step / 2.0 + 1e-12 * (lo.abs() + hi.abs());
            PhiRange { lower: lo - margin, upper: hi + margin }
        })
    }

    /// Transition density of `X_t` given `X_0 = x0`, in original coordinates.
    pub fn transition_density(&self, t: f64, x0: f64, xt: f64) -> Result<f64> {
        if !(t > 0.0) {
            return Err(Error::InvalidArgs(format!("transition time must be positive, got {t}")));
        }
        match self.kind {
            ModelKind::ScaledBm { sigma, mu } => Ok(gaussian_pdf(xt, x0 + mu * t, sigma * sigma * t)),
            ModelKind::Ou { theta, sigma } => {
                let mean = x0 * (-theta * t).exp();
                let var = -sigma * sigma * (-2.0 * theta * t).exp_m1() / (2.0 * theta);
                Ok(gaussian_pdf(xt, mean, var))
            }
            _ => Err(Error::Unsupported { op: "transition_density", model: self.name() }),
        }
    }

    /// Transition density of the unit-volatility process `Y = X/σ`.
    pub fn reduced_transition_density(&self, t: f64, y0: f64, yt: f64) -> Result<f64> {
        let s = self.sigma();
        Ok(s * self.transition_density(t, s * y0, s * yt)?)
    }
}

#[cfg(test)]
mod tests {
    use super::*;
    use approx::assert_relative_eq;

    fn sine_unit_sigma() -> DiffusionModel {
        DiffusionModel::sine(2.0, 2.0, 8.0, 1.0).unwrap()
    }

    fn all_models() -> Vec<DiffusionModel> {
        vec![
            DiffusionModel::scaled_bm(1.0, 0.0).unwrap(),
            DiffusionModel::scaled_bm(2.0, 0.7).unwrap(),
            DiffusionModel::ou(1.0, 1.0).unwrap(),
            DiffusionModel::ou(2.5, 0.3).unwrap(),
            DiffusionModel::sine_default(),
            sine_unit_sigma(),
        ]
    }

    #[test]
    fn drift_examples() {
        assert_eq!(DiffusionModel::sine_default().sde_drift(0.0), 2.0);
        // Reduced sine drift at y = 0 is b(0)/σ.
        assert_eq!(DiffusionModel::sine_default().drift(0.0), 4.0);
        assert_eq!(DiffusionModel::ou(1.0, 1.0).unwrap().drift(0.0), 0.0);
        let bm = DiffusionModel::scaled_bm(2.0, 0.0).unwrap();
        for x in [-3.0, 0.0, 11.0] {
            assert_eq!(bm.drift(x), 0.0);
        }
        // OU reduction: -θ y regardless of σ.
        assert_eq!(DiffusionModel::ou(1.5, 0.2).unwrap().drift(2.0), -3.0);
    }

    #[test]
    fn phi_examples() {
        assert_relative_eq!(sine_unit_sigma().phi(0.0), -6.0, epsilon = 1e-15);
        let bm = DiffusionModel::scaled_bm(1.0, 0.0).unwrap();
        assert_eq!(bm.phi(0.3), 0.0);
        let ou = DiffusionModel::ou(1.0, 1.0).unwrap();
        assert_eq!(ou.phi(0.0), -0.5);
        assert_relative_eq!(ou.phi(2.0), 0.5 * (4.0 - 1.0));
    }

    #[test]
    fn phi_lower_bound_examples() {
        assert_eq!(DiffusionModel::ou(1.0, 1.0).unwrap().phi_lower_bound().unwrap(), -0.5);
        assert_eq!(DiffusionModel::scaled_bm(1.0, 0.0).unwrap().phi_lower_bound().unwrap(), 0.0);
        let drifted = DiffusionModel::scaled_bm(2.0, 3.0).unwrap();
        assert_eq!(drifted.phi_lower_bound().unwrap(), drifted.phi(1.234));
    }

    #[test]
    fn sine_phi_bounds_hold_on_dense_grid() {
        for model in [sine_unit_sigma(), DiffusionModel::sine_default()] {
            let lo = model.phi_lower_bound().unwrap();
            let hi = model.phi_upper_bound().unwrap();
            assert!((-8.0..0.0).contains(&lo), "lower bound {lo}");
            let ModelKind::Sine { omega, sigma, .. } = *model.kind() else { unreachable!() };
            let period = 2.0 * PI / (omega * sigma);
            let n = 1_000_000;
            let mut grid_min = f64::INFINITY;
            for i in 0..n {
                // Offset so the grid does not coincide with the internal one.
                let y = (i as f64 + 0.371) * period / n as f64;
                let v = model.phi(y);
                grid_min = grid_min.min(v);
                assert!(v >= lo && v <= hi, "phi({y}) = {v} outside [{lo}, {hi}]");
            }
            // The margin is small: the bound is nearly tight.
            assert!(grid_min - lo < 1e-2);
        }
    }

    #[test]
    fn phi_minus_lower_bound_nonnegative() {
        for model in all_models() {
            let lo = model.phi_lower_bound().unwrap();
            for i in 0..2001 {
                let y = -10.0 + i as f64 * 0.01;
                assert!(model.phi(y) - lo >= -1e-12, "{} at {y}", model.name());
            }
        }
    }

    #[test]
    fn phi_matches_finite_differences_of_potential() {
        for model in all_models() {
            let h = 1e-4;
            for i in 0..1000 {
                let y = -2.0 + 4.0 * i as f64 / 999.0;
                let a = |x: f64| model.potential(x);
                let d1 = (a(y + h) - a(y - h)) / (2.0 * h);
                let d2 = (a(y + h) - 2.0 * a(y) + a(y - h)) / (h * h);
                let fd = 0.5 * (d1 * d1 + d2);
                let exact = model.phi(y);
                let scale = exact.abs().max(1.0);
                assert!((fd - exact).abs() / scale < 1e-6, "{}: y={y} fd={fd} exact={exact}", model.name());
            }
        }
    }

    #[test]
    fn transition_density_examples() {
        let bm = DiffusionModel::scaled_bm(1.0, 0.0).unwrap();
        assert_relative_eq!(bm.transition_density(1.0, 0.0, 0.0).unwrap(), 0.398_942_280_401_432_7);
        let ou = DiffusionModel::ou(1.0, 1.0).unwrap();
        assert_relative_eq!(ou.transition_density(50.0, 3.0, 0.0).unwrap(), 1.0 / PI.sqrt(), epsilon = 1e-12);
        let v = (1.0 - (-1.0f64).exp()) / 2.0;
        assert_relative_eq!(
            ou.transition_density(0.5, 1.0, (-0.5f64).exp()).unwrap(),
            1.0 / (2.0 * PI * v).sqrt(),
            epsilon = 1e-14
        );
        assert!(matches!(
            DiffusionModel::sine_default().transition_density(1.0, 0.0, 0.0),
            Err(Error::Unsupported { .. })
        ));
    }

    #[test]
    fn ou_density_matches_euler_histogram() {
        use rand::SeedableRng;
        use rand_distr::{Distribution, StandardNormal};
        // Euler–Maruyama with a fine step; probability of landing within ±w of the mean.
        let ou = DiffusionModel::ou(1.0, 1.0).unwrap();
        let mean = (-0.5f64).exp();
        let mut rng = rand_chacha::ChaCha8Rng::seed_from_u64(11);
        let (n, steps, w) = (100_000, 200, 0.05);
        let dt = 0.5 / steps as f64;
        let mut hits = 0;
        for _ in 0..n {
            let mut x = 1.0;
            for _ in 0..steps {
                let z: f64 = StandardNormal.sample(&mut rng);
                x += -x * dt + dt.sqrt() * z;
            }
            if (x - mean).abs() < w {
                hits += 1;
            }
        }
        let empirical = hits as f64 / n as f64 / (2.0 * w);
        let exact = ou.transition_density(0.5, 1.0, mean).unwrap();
        let se = (exact * 2.0 * w / n as f64).sqrt() / (2.0 * w);
        assert!((empirical - exact).abs() < 4.0 * se + 0.01 * exact, "{empirical} vs {exact}");
    }

    #[test]
    fn transition_density_integrates_to_one() {
        let models = [
            DiffusionModel::scaled_bm(1.0, 0.0).unwrap(),
            DiffusionModel::scaled_bm(0.5, 1.2).unwrap(),
            DiffusionModel::ou(1.0, 1.0).unwrap(),
            DiffusionModel::ou(3.0, 2.0).unwrap(),
        ];
        for model in &models {
            for t in [0.1, 1.0, 10.0] {
                let (lo, hi, n) = (-60.0, 60.0, 200_000);
                let h = (hi - lo) / n as f64;
                let mut total = 0.0;
                for i in 0..=n {
                    let w = if i == 0 || i == n { 0.5 } else { 1.0 };
                    total += w * model.transition_density(t, 0.3, lo + i as f64 * h).unwrap();
                }
                assert!((total * h - 1.0).abs() < 1e-4, "{} t={t}: {}", model.name(), total * h);
            }
        }
    }

    #[test]
    fn custom_model_bounds() {
        let m = DiffusionModel::custom(CustomDrift {
            alpha: Arc::new(|y| -y),
            alpha_prime: Arc::new(|_| -1.0),
            potential: Arc::new(|y| -0.5 * y * y),
            phi_lower: None,
            phi_upper: None,
        });
        assert!(!m.is_verified());
        assert!(matches!(m.phi_lower_bound(), Err(Error::Unbounded)));
        assert!(matches!(m.phi_upper_bound(), Err(Error::UnboundedPhi)));
        assert_eq!(m.phi(0.0), -0.5);
    }

    #[test]
    fn invalid_parameters_rejected() {
        assert!(DiffusionModel::scaled_bm(0.0, 0.0).is_err());
        assert!(DiffusionModel::ou(-1.0, 1.0).is_err());
        assert!(DiffusionModel::ou(1.0, f64::NAN).is_err());
        assert!(DiffusionModel::sine(2.0, 2.0, 8.0, 0.0).is_err());
    }
}
