use thiserror::Error;

/// Errors surfaced by solvers, steppers and diagnostics.
#[derive(Debug, Error)]
pub enum Error {
    /// An iterative linear or nonlinear solve exhausted its iteration budget.
    #[error("solver did not converge after {iterations} iterations (residual {residual:.3e})")]
    NonConvergence { iterations: usize, residual: f64 },

    /// Adaptive time stepping halved the step below its hard floor.
    #[error("time step collapsed at t = {t:.6e} (dt = {dt:.3e}); the state cannot dissipate at the configured tolerances")]
    StepCollapse { t: f64, dt: f64 },

    /// The pressure gradient is (numerically) zero, so the eigenproblem degenerates.
    #[error("degenerate spectrum: the pressure gradient vanishes")]
    DegenerateSpectrum,

    /// A stability run was asked to start from data outside the theorem's hypotheses.
    #[error("hypothesis violation: {0}")]
    HypothesisViolation(String),

    /// A 1D-only operation received a field of the wrong dimension.
    #[error("dimension mismatch: expected dim {expected}, got {got}")]
    DimensionMismatch { expected: usize, got: usize },

    /// A parameter fell outside its admissible range.
    #[error("invalid parameter: {0}")]
    InvalidParameter(String),

    /// A trace diagnostic needs more (or nonzero) data than it was given.
    #[error("degenerate trace: {0}")]
    DegenerateTrace(String),

    #[error("snapshot i/o: {0}")]
    Io(#[from] std::io::Error),

    /// A field snapshot failed structural validation.
    #[error("malformed snapshot: {0}")]
    MalformedSnapshot(String),
}

pub type Result<T> = std::result::Result<T, Error>;
