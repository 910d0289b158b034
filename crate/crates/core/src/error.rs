//! Error type shared by every module of the crate.

use std::path::PathBuf;

use crate::stepper::SimState;

/// Result alias used throughout the crate.
pub type Result<T> = std::result::Result<T, Error>;

#[derive(Debug, thiserror::Error)]
pub enum Error {
    /// Inconsistent sizes or parameters handed to a numerical routine.
    #[error("configuration error: {0}")]
    Configuration(String),

    /// Argument outside the mathematical domain of the operation.
    #[error("domain error: {0}")]
    Domain(String),

    /// The motility pair violates its modelling hypotheses (e.g. gamma <= 0).
    #[error("model validity error: {0}")]
    ModelValidity(String),

    #[error("elliptic solver did not converge after {iterations} iterations (relative residual {residual:.3e}, target {tol:.3e})")]
    SolverNonConvergence {
        iterations: usize,
        residual: f64,
        tol: f64,
    },

    /// The admissible time step fell below `dt_min`.
    #[error("step size collapse at t = {t}: dt = {dt:.3e} < dt_min = {dt_min:.3e}")]
    StepSizeCollapse {
        t: f64,
        dt: f64,
        dt_min: f64,
        state: Box<SimState>,
    },

    /// The blow-up guard fired: `max u` exceeded the allowed multiple of its initial value.
    #[error("blow-up guard: max u = {u_max:.6e} exceeds {limit:.6e} at t = {t}")]
    BlowUp { t: f64, u_max: f64, limit: f64 },

    #[error("fit error: {0}")]
    Fit(String),

    /// Config or plan file rejected; `line` is 1-based, 0 when the key was absent.
    #[error("invalid config key `{key}` (line {line}): {message}")]
    Validation {
        key: String,
        line: usize,
        message: String,
    },

    #[error("snapshot format error: {0}")]
    Format(String),

    #[error("i/o error on {path}: {source}")]
    Io {
        path: PathBuf,
        #[source]
        source: std::io::Error,
    },
}

impl Error {
    pub(crate) fn io(path: impl Into<PathBuf>, source: std::io::Error) -> Self {
        Error::Io {
            path: path.into(),
            source,
        }
    }

    pub(crate) fn validation(key: &str, line: usize, message: impl Into<String>) -> Self {
        Error::Validation {
            key: key.to_string(),
            line,
            message: message.into(),
        }
    }

    /// True for errors caused by bad user input rather than a failed computation.
    pub fn is_validation(&self) -> bool {
        matches!(self, Error::Validation { .. } | Error::Configuration(_))
    }
}
