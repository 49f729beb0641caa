//! Diffusion-bridge sampling with blocked Gibbs updating schemes.
//!
//! The crate is organised bottom-up:
//!
//! - [`models`]: scalar diffusion laws (scaled Brownian motion, Ornstein–Uhlenbeck,
//!   sine diffusion) in unit-volatility coordinates, with the φ-function and its bounds.
//! - [`bridge`]: Brownian-bridge proposals and path-space rejection samplers
//!   (mesh-quadrature and Poisson-thinning variants).
//! - [`blocking`]: anchors, blocks, the checkerboard / lexicographic / random schemes
//!   and the blocked Gibbs sampler over path segments.
//! - [`analysis`]: closed-form knot laws, partial correlations, Toeplitz spectra,
//!   L²-convergence rates, relaxation times and cost models.
//! - [`diagnostics`]: autocorrelation, ESS / taESS, geometric-rate fitting and
//!   two-sample Kolmogorov–Smirnov statistics.

// Negated float comparisons are deliberate: they reject NaN along with out-of-range values.
#![allow(clippy::neg_cmp_op_on_partial_ord)]

pub mod analysis;
pub mod blocking;
pub mod bridge;
pub mod diagnostics;
mod error;
pub mod models;
pub mod rng;

pub use error::{Error, Result};
