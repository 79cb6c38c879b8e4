//! Finite-time shadowing of random pseudotrajectories of linear skew
//! products over the Bernoulli shift.
//!
//! The system is `f(w, x) = (T(w), lambda(w) x)` on the product of the
//! two-sided fair-coin shift with the real line, where `lambda` is a
//! strictly positive multiplier read off a finite window of the base
//! point. The crate provides:
//!
//! - [`symbolic`]: the truncated shift space, its dyadic metric, and
//!   metric-ball sampling;
//! - [`cocycle`]: finite-window multiplier tables, Birkhoff log-sums, and
//!   depth compression;
//! - [`pseudo`]: the Markov-chain generator of random d-pseudotrajectories,
//!   residual extraction, and start-point normalization;
//! - [`shadow`]: the constructive shadowing pipeline — weighted Chebyshev
//!   minimax, base-point splicing, and end-to-end verification of a
//!   witness orbit;
//! - [`ldp`]: large-deviation rate functions of the Birkhoff sums, fitted
//!   quadratic tail constants, and the exponent threshold they imply;
//! - [`experiment`]: a config-driven, reproducible Monte Carlo harness
//!   with a CLI estimating the probability that a random pseudotrajectory
//!   is shadowable, including the scaling sweep `d = epsilon / N^gamma`;
//! - [`oracle`]: independent reference implementations (brute-force
//!   minimax, extended-range arithmetic, exact binomial tails) used by the
//!   verification suites.

// Validation guards use negated comparisons (`!(x > 0.0)`) on purpose:
// they reject NaN, which the inverted comparison would silently accept.
#![allow(clippy::neg_cmp_op_on_partial_ord)]

pub mod cocycle;
pub mod error;
pub mod experiment;
pub mod ldp;
pub mod oracle;
pub mod pseudo;
pub mod shadow;
pub mod stats;
pub mod symbolic;

pub use error::{Error, Result};
