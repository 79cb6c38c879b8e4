//! Crate-wide error type.
//!
//! Every operation that can reject its input does so through [`Error`];
//! out-of-window coordinate reads, malformed tables, and precondition
//! violations are hard errors, never silent defaults.

use thiserror::Error;

#[derive(Debug, Error)]
pub enum Error {
    /// Window bounds are empty or reversed.
    #[error("invalid window: lo={lo} > hi={hi}")]
    InvalidWindow { lo: i64, hi: i64 },

    /// A coordinate read outside the stored window.
    #[error("coordinate {index} outside stored window [{lo}, {hi}]")]
    OutOfWindow { index: i64, lo: i64, hi: i64 },

    /// Two points share no symmetric index range, so the dyadic metric
    /// is undefined on their stored data.
    #[error("points have no common symmetric window")]
    IncomparablePoints,

    /// A stored window is too small for the requested operation.
    #[error("insufficient resolution: {op} needs index {index} ({detail})")]
    InsufficientResolution {
        op: &'static str,
        index: i64,
        detail: String,
    },

    /// Metric radius outside (0, 1].
    #[error("invalid radius d={d}: must satisfy 0 < d <= 1")]
    InvalidRadius { d: f64 },

    /// Perturbation size outside the admissible range for the generator.
    #[error("invalid perturbation d={d}: must satisfy 0 < d < min(1, 2^-(t+1)) with t={depth}")]
    InvalidPerturbation { d: f64, depth: u32 },

    /// Lookup-table construction or validation failure.
    #[error("invalid cocycle table: {0}")]
    InvalidTable(String),

    /// `compress` cannot reach the requested depth: the log-oscillation at
    /// that depth is not below -a/2.
    #[error(
        "depth {target} too small: log-oscillation {oscillation} at pattern {pattern:#b} \
         is not below -a/2 = {threshold}"
    )]
    DepthTooSmall {
        target: u32,
        pattern: usize,
        oscillation: f64,
        threshold: f64,
    },

    /// A stored trajectory violates the pseudotrajectory definition.
    #[error("corrupted trajectory: residual r_{index} = {value} has |r| >= 1")]
    CorruptedTrajectory { index: usize, value: f64 },

    /// Pair indices out of range or not ordered.
    #[error("invalid index pair ({p}, {q}) for instance of length {len}")]
    IndexPair { p: usize, q: usize, len: usize },

    /// A minimax instance with fewer than two points.
    #[error("degenerate instance: need at least two points, got {len}")]
    DegenerateInstance { len: usize },

    /// Rate-model fitting failed (degenerate or invalid table).
    #[error("invalid rate model: {0}")]
    InvalidModel(String),

    /// Parameters outside the domain of an analytic formula.
    #[error("invalid parameters: {0}")]
    InvalidParameters(String),

    /// Configuration file or value rejected.
    #[error("config error: {0}")]
    Config(String),

    /// A run would exceed the configured step budget.
    #[error("resource limit: {steps} trajectory steps exceed budget {budget}")]
    ResourceLimit { steps: u128, budget: u128 },

    #[error("io error: {0}")]
    Io(#[from] std::io::Error),
}

pub type Result<T> = std::result::Result<T, Error>;
