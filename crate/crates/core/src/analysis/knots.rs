//! The Gaussian law of the knot vector given the bridge endpoints, the affine sweep map
//! `G ↦ BG + b + ε` of the knot-only Gibbs chain, and simulation of that chain.

use nalgebra::{DMatrix, DVector};
use rand::Rng;
use rand_distr::{Distribution, StandardNormal};

use crate::blocking::Scheme;
use crate::models::{DiffusionModel, ModelKind};
use crate::rng::{StreamSeed, SCHEDULER_BLOCK};
use crate::{Error, Result};

pub const TRIDIAGONAL_TOLERANCE: f64 = 1e-8;

/// Recorded knot vectors, one row of length `m` per sweep.
#[derive(Debug, Clone, Default, PartialEq)]
pub struct KnotChain {
    m: usize,
    data: Vec<f64>,
}

impl KnotChain {
    pub fn new(m: usize) -> Self {
        Self { m, data: Vec::new() }
    }

    pub fn with_capacity(m: usize, sweeps: usize) -> Self {
        Self { m, data: Vec::with_capacity(m * sweeps) }
    }

    pub fn push(&mut self, knots: &[f64]) {
        assert_eq!(knots.len(), self.m, "knot vector length");
        self.data.extend_from_slice(knots);
    }

    pub fn m(&self) -> usize {
        self.m
    }

    pub fn len(&self) -> usize {
        self.data.len().checked_div(self.m).unwrap_or(0)
    }

    pub fn is_empty(&self) -> bool {
        self.data.is_empty()
    }

    pub fn row(&self, sweep: usize) -> &[f64] {
        &self.data[sweep * self.m..(sweep + 1) * self.m]
    }

    pub fn rows(&self) -> impl Iterator<Item = &[f64]> {
        self.data.chunks_exact(self.m.max(1))
    }

    pub fn coordinate(&self, i: usize) -> Vec<f64> {
        self.rows().map(|r| r[i]).collect()
    }

    /// `⟨u, G⟩` per sweep.
    pub fn projection(&self, u: &[f64]) -> Vec<f64> {
        self.rows().map(|r| r.iter().zip(u).map(|(a, b)| a * b).sum()).collect()
    }

    /// Drops the first `n` sweeps.
    pub fn skip(&self, n: usize) -> KnotChain {
        let n = n.min(self.len());
        KnotChain { m: self.m, data: self.data[n * self.m..].to_vec() }
    }

    pub fn mean(&self) -> DVector<f64> {
        let n = self.len() as f64;
        let mut mean = DVector::zeros(self.m);
        for r in self.rows() {
            for (acc, x) in mean.iter_mut().zip(r) {
                *acc += x;
            }
        }
        mean / n
    }

    pub fn covariance(&self) -> DMatrix<f64> {
        let n = self.len() as f64;
        let mean = self.mean();
        let mut cov = DMatrix::zeros(self.m, self.m);
        for r in self.rows() {
            let d = DVector::from_iterator(self.m, r.iter().zip(mean.iter()).map(|(x, m)| x - m));
            cov.ger(1.0, &d, &d, 1.0);
        }
        cov / (n - 1.0)
    }
}

#[derive(Debug, Clone, PartialEq)]
pub struct GaussianKnotLaw {
    pub mean: DVector<f64>,
    pub covariance: DMatrix<f64>,
    pub precision: DMatrix<f64>,
}

impl GaussianKnotLaw {
    /// Inverts the covariance and checks that the precision is tridiagonal (the knot
    /// vector is Markov).
    pub fn new(mean: DVector<f64>, covariance: DMatrix<f64>) -> Result<Self> {
        let m = mean.len();
        if covariance.shape() != (m, m) || m == 0 {
            return Err(Error::InvalidArgs("mean and covariance dimensions disagree".into()));
        }
        let chol = covariance
            .clone()
            .cholesky()
            .ok_or_else(|| Error::NumericallySingular("knot covariance is not positive definite".into()))?;
        let mut precision = chol.inverse();
        precision = (&precision + precision.transpose()) * 0.5;
        for i in 0..m {
            for j in 0..m {
                if i.abs_diff(j) > 1 {
                    let scale = (precision[(i, i)] * precision[(j, j)]).sqrt();
                    if precision[(i, j)].abs() > TRIDIAGONAL_TOLERANCE * scale {
                        return Err(Error::NumericallySingular(format!(
                            "precision entry ({i}, {j}) = {:e} is not negligible",
                            precision[(i, j)]
                        )));
                    }
                }
            }
        }
        Ok(Self { mean, covariance, precision })
    }

    pub fn dim(&self) -> usize {
        self.mean.len()
    }

    /// Partial correlation `−Λ_ij/sqrt(Λ_ii Λ_jj)`.
    pub fn partial_correlation(&self, i: usize, j: usize) -> f64 {
        let p = &self.precision;
        -p[(i, j)] / (p[(i, i)] * p[(j, j)]).sqrt()
    }

    /// `A = I − D⁻¹Λ` with `D` the diagonal of `Λ`.
    pub fn matrix_a(&self) -> DMatrix<f64> {
        let m = self.dim();
        DMatrix::from_fn(m, m, |i, j| if i == j { 0.0 } else { -self.precision[(i, j)] / self.precision[(i, i)] })
    }
}

type MeanFn = Box<dyn Fn(f64) -> f64>;
type CovFn = Box<dyn Fn(f64, f64) -> f64>;

/// Unconditioned mean and covariance functions started from `x0` at time 0.
fn gram(model: &DiffusionModel, x0: f64) -> Result<(MeanFn, CovFn)> {
    match *model.kind() {
        ModelKind::ScaledBm { sigma, mu } => {
            Ok((Box::new(move |t| x0 + mu * t), Box::new(move |s, t| sigma * sigma * s.min(t))))
        }
        ModelKind::Ou { theta, sigma } => Ok((
            Box::new(move |t| x0 * (-theta * t).exp()),
            Box::new(move |s, t| {
                let (lo, hi) = if s <= t { (s, t) } else { (t, s) };
                sigma * sigma / (2.0 * theta) * ((-theta * (hi - lo)).exp() - (-theta * (hi + lo)).exp())
            }),
        )),
        _ => Err(Error::Unsupported { op: "knot_law_gaussian", model: model.name() }),
    }
}

/// Law of `(X_{k_1}, …, X_{k_m}) | X_0 = x0, X_T = xT` by Gaussian conditioning of the
/// unconditioned Gram matrix.
pub fn knot_law_gaussian(
    model: &DiffusionModel,
    x0: f64,
    x_t: f64,
    t_end: f64,
    anchors: &[f64],
) -> Result<GaussianKnotLaw> {
    if anchors.is_empty() || anchors.windows(2).any(|w| !(w[1] > w[0])) {
        return Err(Error::InvalidArgs("anchors must be nonempty and strictly increasing".into()));
    }
    if !(anchors[0] > 0.0 && anchors[anchors.len() - 1] < t_end) {
        return Err(Error::InvalidArgs(format!("anchors must lie in (0, {t_end})")));
    }
    let (mean_fn, cov_fn) = gram(model, x0)?;
    let m = anchors.len();
    let k_tt = cov_fn(t_end, t_end);
    let k_at = DVector::from_iterator(m, anchors.iter().map(|&a| cov_fn(a, t_end)));
    let mean = DVector::from_iterator(
        m,
        anchors.iter().zip(k_at.iter()).map(|(&a, &k)| mean_fn(a) + k / k_tt * (x_t - mean_fn(t_end))),
    );
    let mut cov = DMatrix::from_fn(m, m, |i, j| cov_fn(anchors[i], anchors[j]) - k_at[i] * k_at[j] / k_tt);
    cov = (&cov + cov.transpose()) * 0.5;
    GaussianKnotLaw::new(mean, cov)
}

/// Conditional-mean map of a block update of the coordinates in `set`: returns
/// `(M, v)` with `E[G' | G] = M G + v`.
fn block_update_map(law: &GaussianKnotLaw, set: &[usize]) -> Result<(DMatrix<f64>, DVector<f64>)> {
    let m = law.dim();
    let rest: Vec<usize> = (0..m).filter(|i| !set.contains(i)).collect();
    let lam = &law.precision;
    let lam_ss = lam.select_rows(set).select_columns(set);
    let lam_sr = lam.select_rows(set).select_columns(&rest);
    let inv_ss =
        lam_ss.try_inverse().ok_or_else(|| Error::NumericallySingular("block precision is singular".into()))?;
    let gain = -(&inv_ss * &lam_sr);
    let mut map = DMatrix::identity(m, m);
    let mut offset = DVector::zeros(m);
    let mu_r = DVector::from_iterator(rest.len(), rest.iter().map(|&j| law.mean[j]));
    let shift = &gain * &mu_r;
    for (a, &i) in set.iter().enumerate() {
        map.row_mut(i).fill(0.0);
        for (b, &j) in rest.iter().enumerate() {
            map[(i, j)] = gain[(a, b)];
        }
        offset[i] = law.mean[i] - shift[a];
    }
    Ok((map, offset))
}

/// One-sweep affine map `(B, b)` of the deterministic-order schemes, composed from the
/// block conditional-mean updates in sweep order.
pub fn gibbs_kernel_b(law: &GaussianKnotLaw, scheme: Scheme) -> Result<(DMatrix<f64>, DVector<f64>)> {
    if scheme == Scheme::Random {
        return Err(Error::Unsupported { op: "gibbs_kernel_b", model: "random-scan" });
    }
    let m = law.dim();
    let mut b_mat = DMatrix::identity(m, m);
    let mut b_vec = DVector::zeros(m);
    for set in scheme.partition(m) {
        let (map, offset) = block_update_map(law, &set)?;
        b_vec = &map * b_vec + offset;
        b_mat = &map * b_mat;
    }
    Ok((b_mat, b_vec))
}

/// Mean and covariance after `n` sweeps from `g0`:
/// `Bⁿg0 + (I − B)⁻¹(I − Bⁿ)b` and `Σ − BⁿΣ(Bⁿ)ᵀ`.
pub fn n_step_moments(
    law: &GaussianKnotLaw,
    b_mat: &DMatrix<f64>,
    b_vec: &DVector<f64>,
    g0: &DVector<f64>,
    n: u32,
) -> Result<(DVector<f64>, DMatrix<f64>)> {
    let m = law.dim();
    let id = DMatrix::<f64>::identity(m, m);
    let bn = b_mat.pow(n);
    let inv = (&id - b_mat).try_inverse().ok_or_else(|| Error::NumericallySingular("I − B is singular".into()))?;
    let mean = &bn * g0 + inv * (&id - &bn) * b_vec;
    let cov = &law.covariance - &bn * &law.covariance * bn.transpose();
    Ok((mean, cov))
}

/// Exact draw from the knot law.
pub fn sample_knot_law<R: Rng + ?Sized>(law: &GaussianKnotLaw, rng: &mut R) -> Result<DVector<f64>> {
    let chol = law
        .covariance
        .clone()
        .cholesky()
        .ok_or_else(|| Error::NumericallySingular("knot covariance is not positive definite".into()))?;
    let z = DVector::from_fn(law.dim(), |_, _| StandardNormal.sample(rng));
    Ok(&law.mean + chol.l() * z)
}

/// Single-site full conditionals of a tridiagonal precision.
struct SiteConditionals {
    mean: Vec<f64>,
    sd: Vec<f64>,
    left: Vec<f64>,
    right: Vec<f64>,
}

impl SiteConditionals {
    fn new(law: &GaussianKnotLaw) -> Self {
        let m = law.dim();
        let p = &law.precision;
        let coef = |i: usize, j: usize| -p[(i, j)] / p[(i, i)];
        Self {
            mean: law.mean.iter().copied().collect(),
            sd: (0..m).map(|i| (1.0 / p[(i, i)]).sqrt()).collect(),
            left: (0..m).map(|i| if i > 0 { coef(i, i - 1) } else { 0.0 }).collect(),
            right: (0..m).map(|i| if i + 1 < m { coef(i, i + 1) } else { 0.0 }).collect(),
        }
    }

    fn draw<R: Rng + ?Sized>(&self, x: &mut [f64], i: usize, rng: &mut R) {
        let mu = &self.mean;
        let mut mean = mu[i];
        if i > 0 {
            mean += self.left[i] * (x[i - 1] - mu[i - 1]);
        }
        if i + 1 < x.len() {
            mean += self.right[i] * (x[i + 1] - mu[i + 1]);
        }
        let z: f64 = StandardNormal.sample(rng);
        x[i] = mean + self.sd[i] * z;
    }
}

/// Knot-only Gibbs chain, started from an exact draw of the knot law, recording the
/// knot vector after each sweep.
pub fn simulate_knot_chain(
    law: &GaussianKnotLaw,
    scheme: Scheme,
    n_sweeps: usize,
    seed: &StreamSeed,
) -> Result<KnotChain> {
    let m = law.dim();
    let site = SiteConditionals::new(law);
    let mut x: Vec<f64> = sample_knot_law(law, &mut seed.derive(u64::MAX).stream(0, 0))?.iter().copied().collect();
    let sets = scheme.partition(m);
    let mut chain = KnotChain::with_capacity(m, n_sweeps);
    for sweep in 0..n_sweeps as u64 {
        let mut rng = seed.stream(sweep, 0);
        match scheme {
            Scheme::Random => {
                let mut picks = seed.stream(sweep, SCHEDULER_BLOCK);
                for _ in 0..m {
                    let i = picks.random_range(0..m);
                    site.draw(&mut x, i, &mut rng);
                }
            }
            _ => {
                for set in &sets {
                    for &i in set {
                        site.draw(&mut x, i, &mut rng);
                    }
                }
            }
        }
        chain.push(&x);
    }
    Ok(chain)
}
