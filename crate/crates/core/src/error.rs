use thiserror::Error;

/// Errors raised by pattern design, synthesis and reconstruction.
#[derive(Debug, Error, Clone, PartialEq)]
pub enum Error {
    #[error("invalid coset pattern: {0}")]
    InvalidPattern(String),

    #[error("pattern is not identifiable: lags {missing:?} are not realised by any coset pair")]
    NotIdentifiable { missing: Vec<usize> },

    #[error("coset pairs {missing:?} are not observed by any group")]
    UncoveredPairs { missing: Vec<(usize, usize)> },

    #[error("invalid scenario: {0}")]
    InvalidScenario(String),

    #[error("length mismatch: expected {expected}, got {actual}")]
    LengthMismatch { expected: usize, actual: usize },

    #[error("no observations to average")]
    EmptyObservations,

    #[error("full-rate spectra were not retained")]
    MissingFullRate,

    #[error("grids differ: {0}")]
    GridMismatch(String),

    #[error("reference periodogram has zero energy")]
    ZeroReference,

    #[error("invalid detector configuration: {0}")]
    InvalidDetector(String),

    #[error("scenario file: {0}")]
    Parse(String),
}

pub type Result<T> = std::result::Result<T, Error>;
