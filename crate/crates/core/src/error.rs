use thiserror::Error;

/// Errors raised by the simulation and analysis routines.
#[derive(Debug, Error, Clone, PartialEq)]
pub enum PiezoError {
    #[error("domain error: {0}")]
    Domain(String),

    #[error("xi_max = {given:.6e} too small: tail bound requires at least {required:.6e}")]
    XiMaxTooSmall { given: f64, required: f64 },

    #[error("invalid configuration: {}", .0.join("; "))]
    Config(Vec<String>),

    #[error("unknown initial condition '{0}'")]
    UnknownInitialCondition(String),

    #[error("singular linear system at row {row} (pivot {pivot:.3e})")]
    SingularSystem { row: usize, pivot: f64 },

    #[error("not enough samples: need {needed}, got {got}")]
    InsufficientSamples { needed: usize, got: usize },

    #[error("non-positive energy {value:.3e} at t = {t} inside the fit window")]
    NonPositiveEnergy { t: f64, value: f64 },

    #[error("Lyapunov constant constraint violated: {0}")]
    LyapunovConstraint(String),

    #[error("snapshot format error: {0}")]
    Snapshot(String),

    #[error("i/o error: {0}")]
    Io(String),
}

impl From<std::io::Error> for PiezoError {
    fn from(err: std::io::Error) -> Self {
        PiezoError::Io(err.to_string())
    }
}

pub type Result<T> = std::result::Result<T, PiezoError>;
