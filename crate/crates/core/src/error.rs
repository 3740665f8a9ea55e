use thiserror::Error;

/// Crate-wide error type.
#[derive(Debug, Error)]
pub enum Error {
    /// Matrix or slot dimensions do not match.
    #[error("dimension mismatch: {0}")]
    Dimension(String),

    /// An input lies outside the domain of the requested operation.
    #[error("domain error: {0}")]
    Domain(String),

    /// No Bloch state exists at the requested point (spectral gap).
    #[error("no Bloch state: {0}")]
    NoState(String),

    /// The secular polynomial vanished identically.
    #[error("flat band or singular parameter set: secular polynomial is identically zero")]
    FlatBand,

    /// A coupling could not be brought to ST form with any tried end ordering.
    #[error("coupling not ST-representable: {0}")]
    NonRepresentable(String),

    /// Linear elimination of internal degrees of freedom failed.
    #[error("elimination failed: {0}")]
    Elimination(String),

    /// A unit cell violates its structural invariants.
    #[error("invalid unit cell: {0}")]
    InvalidCell(String),

    /// Bad CLI or config input.
    #[error("config error: {0}")]
    Config(String),

    #[error(transparent)]
    Io(#[from] std::io::Error),

    #[error("serialization error: {0}")]
    Json(#[from] serde_json::Error),
}

pub type Result<T> = std::result::Result<T, Error>;
