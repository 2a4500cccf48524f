use thiserror::Error;

/// Errors raised across the simulation, filtering and recovery pipeline.
#[derive(Debug, Error)]
pub enum Error {
    #[error("invalid parameter `{name}`: {reason}")]
    InvalidParameter { name: &'static str, reason: String },

    #[error("unsupported parameters: {0}")]
    UnsupportedParameter(String),

    #[error("gapless parameters: {0}")]
    GaplessParameters(String),

    #[error("invalid observation window: {0}")]
    InvalidWindow(String),

    #[error("numerical instability: {0}")]
    Instability(String),

    #[error("Fock cutoff too small: population {population:.3e} in the top levels exceeds {threshold:.1e}")]
    CutoffTooSmall { population: f64, threshold: f64 },

    #[error("insufficient data: {0}")]
    InsufficientData(String),

    #[error("empty dataset")]
    EmptyDataset,

    #[error("every bin holds fewer than {min_count} samples")]
    AllBinsUnderThreshold { min_count: usize },

    #[error("covariance matrix is not positive semi-definite (smallest eigenvalue {0:.3e})")]
    NotPositiveDefinite(f64),

    #[error("shape mismatch: {0}")]
    ShapeMismatch(String),

    #[error("config error at line {line}, field `{field}`: {message}")]
    Config {
        line: usize,
        field: String,
        message: String,
    },

    #[error("unknown figure `{0}`")]
    UnknownFigure(String),

    #[error("malformed record file: {0}")]
    MalformedRecord(String),

    #[error(transparent)]
    Io(#[from] std::io::Error),

    #[error(transparent)]
    Csv(#[from] csv::Error),

    #[error(transparent)]
    Json(#[from] serde_json::Error),
}

pub type Result<T> = std::result::Result<T, Error>;

pub(crate) fn invalid(name: &'static str, reason: impl Into<String>) -> Error {
    Error::InvalidParameter {
        name,
        reason: reason.into(),
    }
}
