use thiserror::Error;

/// Errors produced by the model, simulator, and solver.
#[derive(Debug, Error)]
pub enum Error {
    /// A priority value fell outside the distribution's support.
    #[error("value {value} outside support [{lo}, {hi}]")]
    OutsideSupport { value: f64, lo: f64, hi: f64 },

    /// A density failed its contract (negative values, wrong mass, bad grid).
    #[error("invalid density: {0}")]
    InvalidDensity(String),

    /// A parameter violated an operation's precondition.
    #[error("invalid parameter: {0}")]
    InvalidParameter(String),

    /// A combination of options is not supported by the model.
    #[error("unsupported configuration: {0}")]
    UnsupportedConfig(String),

    /// The Neumann series carries no convergence certificate: ‖K̃‖_HS ≥ 1.
    /// Convergence outside the certified region is unknown, not disproven.
    #[error("no convergence certificate: Hilbert-Schmidt norm {hs_norm} >= 1")]
    Divergence { hs_norm: f64 },

    /// The grid linear system could not be solved.
    #[error("linear solve failed: {0}")]
    LinearSolve(String),

    /// p = 1: the stationary equation admits only the degenerate solution;
    /// the old-task priority is the running minimum (record regime).
    #[error("degenerate at p = 1: no proper stationary law; see the records module")]
    DegenerateStationary,

    /// p = 1: the waiting-time pmf collapses onto tau = 1; the mass at any
    /// k > 1 vanishes like (1-p)/2 * 1/(k-1). Use the records module.
    #[error("record regime at p = 1: pmf mass at k > 1 vanishes like (1-p)/2 * 1/(k-1)")]
    RecordRegime,

    /// p = 1: expected waiting time is not defined by the geometric-tail sum
    /// (record regime; inter-record times grow like e^k).
    #[error("no finite-mean certificate at p = 1 (record regime)")]
    InfiniteMean,

    /// An internal invariant that the model guarantees was violated,
    /// signalling a malformed protocol or distribution.
    #[error("contract violation: {0}")]
    ContractViolation(String),
}

pub type Result<T> = std::result::Result<T, Error>;
