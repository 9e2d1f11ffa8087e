use thiserror::Error;

/// Errors produced anywhere in the pipeline.
#[derive(Debug, Error)]
pub enum Error {
    #[error("configuration error in `{field}`: {reason}")]
    Config { field: String, reason: String },

    #[error("dimension mismatch: {0}")]
    Dimension(String),

    #[error("stencil error: {0}")]
    Stencil(String),

    #[error("matrix is not unitary: max |U^dag U - I| = {defect:.3e} (tolerance {tolerance:.1e})")]
    NotUnitary { defect: f64, tolerance: f64 },

    #[error("validation error: {0}")]
    Validation(String),

    #[error("unsupported domain: {0}")]
    UnsupportedDomain(String),

    #[error("assembly error: {0}")]
    Assembly(String),

    #[error("linear solver error: {0}")]
    Solver(String),

    #[error("eigensolver did not converge after {iterations} iterations (worst residual {residual:.3e}, target {target:.3e})")]
    NoConvergence {
        iterations: usize,
        residual: f64,
        target: f64,
    },

    #[error("precondition violated: {0}")]
    Precondition(String),

    #[error("spectral flow failed at s = {s}: {source}")]
    FlowStep {
        s: f64,
        #[source]
        source: Box<Error>,
    },

    #[error("projection loss {loss:.3e} at t = {t} exceeds tolerance {tolerance:.1e}")]
    ProjectionLoss { t: f64, loss: f64, tolerance: f64 },

    #[error("scenario `{scenario}`: {source}")]
    Scenario {
        scenario: String,
        #[source]
        source: Box<Error>,
    },

    #[error("parse error at `{path}`: {message}")]
    Parse { path: String, message: String },

    #[error("io error at {path}: {source}")]
    Io {
        path: String,
        #[source]
        source: std::io::Error,
    },
}

pub type Result<T, E = Error> = std::result::Result<T, E>;

pub(crate) fn config_err(field: impl Into<String>, reason: impl Into<String>) -> Error {
    Error::Config {
        field: field.into(),
        reason: reason.into(),
    }
}
