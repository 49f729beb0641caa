//! Closed-form analysis of blocked samplers on Gaussian targets.
//!
//! For scaled Brownian motion and the Ornstein–Uhlenbeck process the knot vector given
//! the endpoints is Gaussian with a tridiagonal precision `Λ`. Its normalised
//! off-diagonal is the partial correlation `c(δ)` of neighbouring knots, and
//! `A = I − D⁻¹Λ` is the Toeplitz matrix with `λ_max(A) = 2|c|·cos(π/(m+1))`, which
//! fixes the L²-convergence rate of every updating scheme.

pub mod cost;
pub mod eigen;
pub mod knots;
pub mod rates;

pub use cost::{
    cost_blocking, cost_sweep, minimising_num_knots, optimal_num_knots, CostConstants, DEFAULT_C1, DEFAULT_CHI1,
};
pub use knots::{
    gibbs_kernel_b, knot_law_gaussian, n_step_moments, sample_knot_law, simulate_knot_chain, GaussianKnotLaw, KnotChain,
};
pub use rates::{
    build_matrix_a, conditional_cov_ou, convergence_rate, lambda_max_a, partial_corr, rate_report, relaxation_time,
    spectrum_a, RateReport, RelaxationTime,
};
