use std::path::PathBuf;

use thiserror::Error;

pub type Result<T, E = Error> = std::result::Result<T, E>;

#[derive(Debug, Error)]
pub enum Error {
    #[error("i/o error on {path}: {source}")]
    Io {
        path: PathBuf,
        #[source]
        source: std::io::Error,
    },

    #[error("format error: {0}")]
    Format(String),

    #[error("length error: expected {expected} bytes, found {found}")]
    Length { expected: usize, found: usize },

    #[error("validation error at index {index}: {reason}")]
    Validation { index: usize, reason: String },

    #[error("invalid config: {0}")]
    Config(String),

    #[error("range error: {0}")]
    Range(String),

    #[error("singular system: {0}")]
    Singular(String),

    #[error("point maps to the line at infinity (w = {0:e})")]
    Horizon(f64),

    #[error("corner detection failed: {0}")]
    Detection(String),

    #[error("no periodic structure: best autocorrelation {peak:.3} below {threshold}")]
    Periodicity { peak: f64, threshold: f64 },

    #[error("grid error: {0}")]
    Grid(String),

    #[error("metrics error: {0}")]
    Metrics(String),

    #[error("feature extraction failed for cell ({row}, {col}): {reason}")]
    Extraction { row: usize, col: usize, reason: String },

    #[error("dimension mismatch: {0}")]
    Dimension(String),

    #[error("eigen solver did not converge after {sweeps} sweeps")]
    NoConvergence { sweeps: usize },

    #[error("invalid input: {0}")]
    Input(String),

    #[error("no functional cells to average")]
    NoFunctionalCells,

    #[error("report error: {0}")]
    Report(String),
}

impl Error {
    pub(crate) fn io(path: impl Into<PathBuf>, source: std::io::Error) -> Self {
        Error::Io { path: path.into(), source }
    }
}
