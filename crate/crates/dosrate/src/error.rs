//! Crate-wide error type and result alias.

use thiserror::Error;

/// Errors produced by model construction, trace analysis, coding, and simulation.
#[derive(Debug, Error)]
pub enum Error {
    /// Matrix or vector dimensions do not line up.
    #[error("dimension mismatch: {0}")]
    Dimension(String),

    /// A matrix required to be invertible is singular or too ill-conditioned.
    #[error("singular or ill-conditioned matrix: {0}")]
    IllConditioned(String),

    /// The supplied block structure does not reproduce the plant matrix.
    #[error("block structure mismatch: {0}")]
    StructureMismatch(String),

    /// The feedback gain does not place all closed-loop eigenvalues in the open
    /// left half plane.
    #[error("feedback gain is not stabilizing: max closed-loop eigenvalue real part {0:.6}")]
    NotStabilizing(f64),

    /// A parameter is outside its documented domain.
    #[error("invalid parameter: {0}")]
    InvalidParam(String),

    /// The attack budget 1/T + Delta/tau_D meets or exceeds 1, so no bit rate can
    /// certify stability.
    #[error("attack exceeds the stabilizable budget: 1/T + delta/tau_D = {0:.6} >= 1")]
    DosBudget(f64),

    /// A normalized quantizer input left the admissible range [-1, 1].
    #[error("quantizer overflow: |input| = {0:.6e} exceeds 1")]
    QuantizerOverflow(f64),

    /// A runtime invariant of the coder/simulator was violated; indicates a bug
    /// or a numerically degenerate configuration.
    #[error("invariant breach: {0}")]
    InvariantBreach(String),

    /// Configuration file missing, malformed, or inconsistent.
    #[error("config error: {0}")]
    Config(String),

    /// Filesystem failure while reading inputs or writing run outputs.
    #[error(transparent)]
    Io(#[from] std::io::Error),
}

impl Error {
    /// Process exit code for the CLI: 2 = configuration problem, 3 = invariant
    /// breach, 4 = attack budget exceeded.
    pub fn exit_code(&self) -> i32 {
        match self {
            Error::DosBudget(_) => 4,
            Error::QuantizerOverflow(_) | Error::InvariantBreach(_) => 3,
            _ => 2,
        }
    }
}

/// Convenience alias used throughout the crate.
pub type Result<T> = std::result::Result<T, Error>;
