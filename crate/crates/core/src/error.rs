use thiserror::Error;

use crate::rls::IslTrace;

pub type Result<T, E = Error> = std::result::Result<T, E>;

#[derive(Debug, Error)]
pub enum Error {
    #[error("invalid size for {what}: {got}")]
    InvalidSize { what: &'static str, got: usize },

    #[error("invalid mainlobe width {0}: must be odd, at least 1 and no larger than the output length")]
    InvalidWidth(usize),

    #[error("sample rate {sample_rate} Hz is below the bandwidth {bandwidth} Hz")]
    Aliasing { sample_rate: f64, bandwidth: f64 },

    #[error("argument out of domain: {0}")]
    Domain(String),

    #[error("invalid input: {0}")]
    InvalidInput(String),

    #[error("dimension mismatch: expected {expected}, got {got}")]
    DimensionMismatch { expected: usize, got: usize },

    /// The Hermitian system could not be factored, or its estimated
    /// 2-norm condition number exceeded the solver limit.
    #[error("singular system (estimated condition number {condition:.3e})")]
    Singular { condition: f64 },

    #[error("undefined ratio: {0}")]
    UndefinedRatio(&'static str),

    #[error("RLS update diverged at iteration {iteration}")]
    Diverged {
        iteration: usize,
        partial: Option<Box<IslTrace>>,
    },

    #[error("GA generation {generation}: {source}")]
    Generation {
        generation: usize,
        #[source]
        source: Box<Error>,
    },

    #[error(transparent)]
    Io(#[from] std::io::Error),

    #[error(transparent)]
    Json(#[from] serde_json::Error),

    #[error(transparent)]
    Csv(#[from] csv::Error),
}

impl Error {
    /// True for failures that come from the numerics rather than from the
    /// caller's configuration or the filesystem.
    pub fn is_numerical(&self) -> bool {
        match self {
            Error::Singular { .. } | Error::UndefinedRatio(_) | Error::Diverged { .. } => true,
            Error::Generation { source, .. } => source.is_numerical(),
            _ => false,
        }
    }
}
