use thiserror::Error;

/// Errors produced by the estimation, transport and study routines.
#[derive(Debug, Error)]
pub enum Error {
    /// An operation that needs at least one observation got none.
    #[error("empty input")]
    EmptyInput,

    /// A measure violated one of its structural invariants.
    #[error("invalid measure: {0}")]
    InvalidMeasure(String),

    /// Every atom was pruned away during canonicalization.
    #[error("degenerate measure: all weights were pruned")]
    DegenerateMeasure,

    /// An argument fell outside the domain of the operation.
    #[error("domain error: {0}")]
    Domain(String),

    /// The model assigns zero probability to an observed value under a
    /// divergence that cannot tolerate it (KL, chi-square).
    #[error("support violation: model puts zero mass on observed value {value}")]
    SupportViolation { value: u64 },

    /// Invalid or inconsistent configuration.
    #[error("configuration error: {0}")]
    Config(String),

    /// A numerical routine produced a non-finite value or failed to reach
    /// its tolerance.
    #[error("numerical error: {0}")]
    Numerical(String),

    /// A Monte Carlo study could not be completed.
    #[error("study error: {0}")]
    Study(String),

    /// Malformed textual input.
    #[error("parse error: {0}")]
    Parse(String),

    #[error(transparent)]
    Io(#[from] std::io::Error),

    #[error(transparent)]
    Json(#[from] serde_json::Error),

    #[error(transparent)]
    Csv(#[from] csv::Error),
}

pub type Result<T> = std::result::Result<T, Error>;
