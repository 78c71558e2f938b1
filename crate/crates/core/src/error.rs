use thiserror::Error;

/// Errors raised by the numerical core.
#[derive(Debug, Clone, Error, PartialEq)]
pub enum Error {
    #[error("invalid parameter: {0}")]
    InvalidParameter(String),

    #[error("point outside the coordinate chart: {0}")]
    Domain(String),

    #[error("singular metric at {0}")]
    SingularMetric(String),

    #[error("no sign change in bracket [{a}, {b}]")]
    Bracket { a: f64, b: f64 },

    #[error("no bound orbit for integrals {0}")]
    NoBoundOrbit(String),

    #[error("unmappable torus at toy angles {theta:?}: toy actions {actions:?}")]
    Unmappable { theta: [f64; 3], actions: [f64; 3] },

    #[error("singular matrix ({0})")]
    SingularMatrix(String),

    #[error("no convergence after {iterations} iterations (residual {residual:e})")]
    NoConvergence { iterations: usize, residual: f64 },

    #[error("degenerate interval [{0}, {1}]")]
    DegenerateInterval(f64, f64),

    #[error("integrator step size collapsed at t = {0}")]
    StepSizeCollapse(f64),

    #[error("{0}")]
    Other(String),
}

pub type Result<T> = std::result::Result<T, Error>;
