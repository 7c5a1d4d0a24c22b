use thiserror::Error;

#[derive(Debug, Error)]
pub enum Error {
    #[error("direction sine {0} is outside [-1, 1]")]
    InvalidDirection(f64),

    #[error("range {0} m must be positive and finite")]
    InvalidRange(f64),

    #[error("grid of {grid} points cannot resolve {antennas} antennas")]
    GridTooSmall { grid: usize, antennas: usize },

    #[error("{what}: expected {expected}, found {found}")]
    DimensionMismatch {
        what: &'static str,
        expected: usize,
        found: usize,
    },

    #[error("covariance is numerically singular (condition number {cond:.3e})")]
    SingularCovariance { cond: f64 },

    #[error("perturbation entry {index} has modulus {modulus}, expected 1")]
    NonUnimodular { index: usize, modulus: f64 },

    #[error("covariance matrix is not positive semidefinite")]
    NotPositiveSemidefinite,

    #[error("full perturbation update is limited to 16 antennas, got {0}")]
    TooManyAntennas(usize),

    #[error("Fisher information matrix is singular")]
    SingularFim,

    #[error("reference channel has zero norm")]
    ZeroNormTruth,

    #[error("invalid configuration: {0}")]
    Config(String),

    #[error(transparent)]
    Io(#[from] std::io::Error),

    #[error(transparent)]
    Json(#[from] serde_json::Error),
}

pub type Result<T> = std::result::Result<T, Error>;
