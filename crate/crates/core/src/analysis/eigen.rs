//! Eigen-solvers used as oracles for the analytic spectra: Sturm-sequence bisection for
//! symmetric tridiagonal matrices and power iteration for spectral radii.

use nalgebra::{DMatrix, DVector};

/// Number of eigenvalues of the symmetric tridiagonal matrix (`diag`, `off`) strictly
/// below `x`.
fn sturm_count(diag: &[f64], off: &[f64], x: f64) -> usize {
    let mut count = 0;
    let mut q = 1.0;
    for i in 0..diag.len() {
        let e2 = if i == 0 { 0.0 } else { off[i - 1] * off[i - 1] };
        q = diag[i] - x - if i == 0 { 0.0 } else { e2 / q };
        if q == 0.0 {
            q = -f64::EPSILON * (1.0 + x.abs());
        }
        if q < 0.0 {
            count += 1;
        }
    }
    count
}

/// All eigenvalues of a symmetric tridiagonal matrix, ascending, by bisection.
pub fn tridiagonal_eigenvalues(diag: &[f64], off: &[f64]) -> Vec<f64> {
    let n = diag.len();
    assert_eq!(off.len(), n.saturating_sub(1), "off-diagonal must have length n − 1");
    // Gershgorin interval.
    let mut lo = f64::INFINITY;
    let mut hi = f64::NEG_INFINITY;
    for i in 0..n {
        let r = if i > 0 { off[i - 1].abs() } else { 0.0 } + if i + 1 < n { off[i].abs() } else { 0.0 };
        lo = lo.min(diag[i] - r);
        hi = hi.max(diag[i] + r);
    }
    let pad = 1e-12 * (1.0 + lo.abs().max(hi.abs()));
    (0..n)
        .map(|k| {
            let (mut a, mut b) = (lo - pad, hi + pad);
            for _ in 0..200 {
                let mid = 0.5 * (a + b);
                if mid <= a || mid >= b {
                    break;
                }
                if sturm_count(diag, off, mid) > k {
                    b = mid;
                } else {
                    a = mid;
                }
            }
            0.5 * (a + b)
        })
        .collect()
}

#[derive(Debug, Clone)]
pub struct PowerResult {
    pub value: f64,
    pub vector: DVector<f64>,
    pub iterations: usize,
}

fn start_vector(n: usize) -> DVector<f64> {
    // Mostly positive with a small irregular component, so the start is never
    // orthogonal to a dominant eigenvector.
    DVector::from_fn(n, |i, _| 1.0 + 0.01 * ((i as f64 + 1.0) * 0.618_033_988_75).fract())
}

/// Largest algebraic eigenvalue of a symmetric matrix, by power iteration on the
/// shifted matrix `A + sI` with Rayleigh-quotient estimates.
pub fn symmetric_power_iteration(a: &DMatrix<f64>, tol: f64, max_iter: usize) -> PowerResult {
    let n = a.nrows();
    let shift = a.row_iter().map(|r| r.iter().map(|x| x.abs()).sum::<f64>()).fold(0.0, f64::max);
    let shifted = a + DMatrix::identity(n, n) * shift;
    let mut v = start_vector(n).normalize();
    let mut value = f64::NAN;
    for it in 1..=max_iter {
        let w = &shifted * &v;
        let next = v.dot(&w);
        let norm = w.norm();
        if norm == 0.0 {
            return PowerResult { value: -shift + next, vector: v, iterations: it };
        }
        v = w / norm;
        if (next - value).abs() <= tol * next.abs().max(1.0) {
            return PowerResult { value: next - shift, vector: v, iterations: it };
        }
        value = next;
    }
    PowerResult { value: value - shift, vector: v, iterations: max_iter }
}

/// Spectral radius of a (possibly non-symmetric) matrix whose dominant eigenvalue is
/// real and simple, from the growth ratio of successive iterates.
pub fn spectral_radius(b: &DMatrix<f64>, tol: f64, max_iter: usize) -> PowerResult {
    let mut v = start_vector(b.nrows()).normalize();
    let mut value = f64::NAN;
    for it in 1..=max_iter {
        let w = b * &v;
        let norm = w.norm();
        if norm == 0.0 {
            return PowerResult { value: 0.0, vector: v, iterations: it };
        }
        v = w / norm;
        if (norm - value).abs() <= tol * norm {
            return PowerResult { value: norm, vector: v, iterations: it };
        }
        value = norm;
    }
    PowerResult { value, vector: v, iterations: max_iter }
}

/// Dominant left eigenvector `u` (`uᵀB = ρuᵀ`), unit norm, sign chosen so its largest
/// entry is positive.
pub fn dominant_left_eigenvector(b: &DMatrix<f64>) -> DVector<f64> {
    let mut u = spectral_radius(&b.transpose(), 1e-15, 1_000_000).vector;
    let imax = u.iamax();
    if u[imax] < 0.0 {
        u = -u;
    }
    u
}

#[cfg(test)]
mod tests {
    use super::*;
    use approx::assert_relative_eq;

    #[test]
    fn bisection_on_known_spectrum() {
        // diag(1, 2, 3) has eigenvalues 1, 2, 3.
        let ev = tridiagonal_eigenvalues(&[3.0, 1.0, 2.0], &[0.0, 0.0]);
        for (a, b) in ev.iter().zip([1.0, 2.0, 3.0]) {
            assert_relative_eq!(*a, b, epsilon = 1e-13);
        }
        // [[2, 1], [1, 2]] has eigenvalues 1 and 3.
        let ev = tridiagonal_eigenvalues(&[2.0, 2.0], &[1.0]);
        assert_relative_eq!(ev[0], 1.0, epsilon = 1e-13);
        assert_relative_eq!(ev[1], 3.0, epsilon = 1e-13);
    }

    #[test]
    fn bisection_agrees_with_dense_solver() {
        let diag = [0.3, -1.2, 2.0, 0.7, 0.0];
        let off = [0.5, -0.8, 1.1, 0.25];
        let mut dense = DMatrix::zeros(5, 5);
        for i in 0..5 {
            dense[(i, i)] = diag[i];
            if i < 4 {
                dense[(i, i + 1)] = off[i];
                dense[(i + 1, i)] = off[i];
            }
        }
        let mut reference: Vec<f64> = dense.symmetric_eigenvalues().iter().copied().collect();
        reference.sort_by(f64::total_cmp);
        for (a, b) in tridiagonal_eigenvalues(&diag, &off).iter().zip(&reference) {
            assert_relative_eq!(a, b, epsilon = 1e-12);
        }
    }

    #[test]
    fn power_iterations() {
        let a = DMatrix::from_row_slice(2, 2, &[0.0, 0.5, 0.5, 0.0]);
        assert_relative_eq!(symmetric_power_iteration(&a, 1e-15, 10_000).value, 0.5, epsilon = 1e-12);
        let b = DMatrix::from_row_slice(2, 2, &[0.5, 1.0, 0.0, 0.25]);
        assert_relative_eq!(spectral_radius(&b, 1e-15, 10_000).value, 0.5, epsilon = 1e-10);
        let u = dominant_left_eigenvector(&b);
        let lhs = b.transpose() * &u;
        assert_relative_eq!((lhs - &u * 0.5).norm(), 0.0, epsilon = 1e-10);
        assert_eq!(spectral_radius(&DMatrix::zeros(1, 1), 1e-15, 10).value, 0.0);
    }
}
