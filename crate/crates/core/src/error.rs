use std::path::PathBuf;

/// Errors produced by this crate.
#[derive(Debug, thiserror::Error)]
#[non_exhaustive]
pub enum Error {
    /// An argument was outside the domain of the operation.
    #[error("domain error: {0}")]
    Domain(String),

    /// The subsampled-Gaussian amplification bound does not apply at this Rényi order.
    #[error("Rényi order {order} outside the validity window (max {max_order})")]
    OrderOutOfRange { order: f64, max_order: f64 },

    #[error("RDP curve is empty")]
    EmptyCurve,

    /// No noise multiplier up to the search ceiling meets the privacy budget.
    #[error(
        "privacy budget infeasible: eps={eps}, delta={delta} not reached at sigma={sigma_max}"
    )]
    Infeasible {
        eps: f64,
        delta: f64,
        sigma_max: f64,
    },

    #[error("quadrature did not converge on [{lo}, {hi}]")]
    QuadratureNonConvergence { lo: f64, hi: f64 },

    /// Two-point radial noise is undefined at a stationary point.
    #[error("two-point radial noise needs a nonzero gradient")]
    ZeroGradient,

    /// A noise draw broke the almost-sure bound ‖e‖ ≤ τ₀ + τ₁‖∇f(x)‖.
    #[error("bounded-variance violation: ‖e‖={noise_norm} > bound={bound} at draw {draw}")]
    NoiseBoundViolation {
        point: Vec<f64>,
        noise: Vec<f64>,
        noise_norm: f64,
        bound: f64,
        draw: usize,
    },

    #[error("batch size mismatch: expected {expected}, got {got}")]
    BatchSizeMismatch { expected: usize, got: usize },

    #[error("cannot draw {batch} distinct indices from {population}")]
    BatchTooLarge { batch: usize, population: usize },

    #[error("operation needs a finite-sum objective")]
    NotFiniteSum,

    #[error("precondition violated: {0}")]
    Precondition(String),

    #[error("degenerate input: {0}")]
    Degenerate(String),

    #[error("config error: {0}")]
    Config(String),

    #[error("refusing to overwrite {0} (use --force)")]
    WouldOverwrite(PathBuf),

    #[error(transparent)]
    Io(#[from] std::io::Error),

    #[error(transparent)]
    Csv(#[from] csv::Error),
}

pub type Result<T, E = Error> = std::result::Result<T, E>;

pub(crate) fn domain(msg: impl Into<String>) -> Error {
    Error::Domain(msg.into())
}
