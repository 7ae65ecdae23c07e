use thiserror::Error;

#[derive(Debug, Error)]
pub enum Error {
    #[error("invalid configuration: {0}")]
    InvalidConfig(String),

    #[error("domain error: {0}")]
    Domain(String),

    #[error("degenerate weights: {0}")]
    DegenerateWeights(String),

    #[error("degenerate Crank-Nicolson kernel at rho = 1")]
    DegenerateKernel,

    #[error("numerical failure in model at state {state:?}: {reason}")]
    NumericalModel { state: Vec<f64>, reason: String },

    #[error("model does not support {0}")]
    Unsupported(String),

    #[error("invalid sampler state: {0}")]
    InvalidState(String),

    #[error("statistic undefined: {0}")]
    Undefined(String),

    #[error("initial likelihood estimate is degenerate for unit {unit_id}")]
    StartupDegenerate { unit_id: usize },

    #[error("particle tuning failed for unit {unit_id}: no N <= {cap} reached the variance target")]
    TuningFailed { unit_id: usize, cap: usize },

    #[error("malformed input at row {row}: {reason}")]
    Parse { row: usize, reason: String },

    #[error(transparent)]
    Io(#[from] std::io::Error),

    #[error(transparent)]
    Csv(#[from] csv::Error),
}

pub type Result<T, E = Error> = std::result::Result<T, E>;
