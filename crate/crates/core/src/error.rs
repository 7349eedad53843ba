use thiserror::Error;

/// Errors surfaced by the analysis/synthesis pipeline.
#[derive(Debug, Error)]
pub enum Error {
    #[error("invalid filter spec: {0}")]
    FilterSpec(String),
    #[error("bandwidth error: {0}")]
    Bandwidth(String),
    #[error("invalid config: {0}")]
    Config(String),
    #[error("shape mismatch: {0}")]
    Shape(String),
    #[error("empty grid: {0}")]
    EmptyGrid(String),
    #[error("non-finite data: {0}")]
    NonFinite(String),
    #[error("numerical failure: {0}")]
    Numerical(String),
    #[error("wav error: {0}")]
    Wav(String),
    #[error("container error: {0}")]
    Container(String),
    #[error("io error: {0}")]
    Io(#[from] std::io::Error),
    #[error("json error: {0}")]
    Json(#[from] serde_json::Error),
}

impl Error {
    /// Coarse classification used by the CLI for exit codes.
    pub fn is_numerical(&self) -> bool {
        matches!(self, Error::Numerical(_) | Error::NonFinite(_))
    }
}

pub type Result<T> = std::result::Result<T, Error>;
