//! Numerical laboratory for dynamical wavefunction-collapse models.
//!
//! The crate simulates continuous collapse of finite-dimensional quantum
//! states driven by white or colored noise, and evaluates the closed-form
//! rate and decoherence predictions the trajectory statistics must match.
//!
//! Conventions used throughout:
//!
//! * A collapse rate `lambda` corresponds to raw Brownian increments of
//!   variance `lambda * dt` per channel. The single mapping point between a
//!   rate and the Brownian generator's diffusion constant is
//!   [`noise::rate_diffusion`]; every engine goes through it.
//! * Ensemble-averaged off-diagonal elements between eigenvalues `a1`, `a2`
//!   decay like `exp(-lambda t (a1 - a2)^2 / 2)`.
//! * Randomness is reproducible: everything derives from a `(seed, stream)`
//!   pair and results are independent of thread count.
//! * Dimensional quantities are CGS (centimeters, grams, seconds) unless a
//!   function name says otherwise; electron-volt outputs are explicit.

// Parameter guards are written `!(x > 0.0)` on purpose: the negation also
// rejects NaN, which a `x <= 0.0` rewrite would silently admit.
#![allow(clippy::neg_cmp_op_on_partial_ord)]

pub mod bessel;
pub mod constants;
pub mod csl;
pub mod engine;
pub mod ensemble;
pub mod error;
pub mod gauss_hermite;
pub mod noise;
pub mod quadrature;
pub mod quantum;
pub mod rel;

pub use engine::{CollapseOperatorSet, DetectionParams, TrajectoryRecord};
pub use ensemble::EnsembleStats;
pub use error::CoreError;
pub use noise::{Kernel, NoiseKind, NoisePath, TimeGrid};
pub use quantum::{DensityMatrix, HermitianOperator, StateVector};

pub type C64 = num_complex::Complex64;

/// Crate version, for embedding in result artifacts.
pub fn version() -> &'static str {
    env!("CARGO_PKG_VERSION")
}
