//! Crate-wide error type.

use thiserror::Error;

/// Errors produced by estimation, portfolio construction, simulation and
/// backtesting.
#[derive(Debug, Error)]
pub enum Error {
    /// Ingestion or validation failure tied to a specific input line
    /// (1-based, header included).
    #[error("line {line}: {reason}")]
    Ingest { line: usize, reason: String },

    /// Precondition violation on an operation input.
    #[error("invalid input: {0}")]
    InvalidInput(String),

    /// A column has zero variance after centering and cannot be regressed.
    #[error("degenerate column {label:?}: zero variance after centering")]
    DegenerateColumn { label: String },

    /// Data or matrix is degenerate for the requested operation.
    #[error("degenerate data: {0}")]
    Degenerate(String),

    /// A symmetric matrix was required (e.g. converting a nodewise estimate
    /// to a partial-correlation decomposition is a misuse).
    #[error("matrix is not symmetric: {0}")]
    NotSymmetric(String),

    /// A variance that must be strictly positive is zero.
    #[error("zero variance: {0}")]
    ZeroVariance(String),

    /// Invalid run or study configuration.
    #[error("invalid config: {0}")]
    Config(String),

    /// Failure inside a specific backtest window.
    #[error("window {window}: {source}")]
    Window {
        window: usize,
        #[source]
        source: Box<Error>,
    },

    #[error(transparent)]
    Io(#[from] std::io::Error),

    #[error(transparent)]
    Csv(#[from] csv::Error),

    #[error(transparent)]
    Json(#[from] serde_json::Error),
}

pub type Result<T> = std::result::Result<T, Error>;
