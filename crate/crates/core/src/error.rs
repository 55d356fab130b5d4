use thiserror::Error;

pub type Result<T> = std::result::Result<T, Error>;

/// Error type shared by every analysis in the crate.
#[derive(Debug, Clone, Error)]
pub enum Error {
    /// Input outside the physical or mathematical domain of an operation.
    #[error("domain error: {0}")]
    Domain(String),

    /// Invalid configuration: grid sizes, tolerance ranges, axis specs.
    #[error("configuration error: {0}")]
    Config(String),

    /// A numerical procedure failed to meet its accuracy contract.
    #[error("numerical error: {what} (residual {residual:.3e})")]
    Numerical { what: String, residual: f64 },

    /// Adaptive step size underflowed; the solution is valid up to `t_reached`.
    #[error("stiffness error: step size underflow at t = {t_reached}")]
    Stiffness { t_reached: f64 },

    /// Not enough samples or points for the requested analysis.
    #[error("insufficient data: {0}")]
    InsufficientData(String),

    /// Least-squares fit rejected (too few points or degenerate data).
    #[error("fit error: {0}")]
    Fit(String),

    /// A guaranteed internal invariant was violated.
    #[error("internal error: {0}")]
    Internal(String),
}
