//! Error types shared across the crate.

/// Crate-wide result alias.
pub type Result<T> = std::result::Result<T, Error>;

/// Everything that can go wrong in this crate.
#[derive(Debug, thiserror::Error)]
pub enum Error {
    /// Input shapes do not line up (batch vs layer dims, matrix products, ...).
    #[error("dimension mismatch: {0}")]
    DimensionMismatch(String),

    /// An input value is out of its documented domain (non-finite logits,
    /// non-positive class weight, invalid probability vector, ...).
    #[error("invalid input: {0}")]
    InvalidInput(String),

    /// A configuration value violates its invariant (epochs = 0, batch = 0,
    /// negative lambda, ...).
    #[error("invalid configuration: {0}")]
    InvalidConfig(String),

    /// The requested combination is not supported (e.g. clinical class roles
    /// with a class count other than three).
    #[error("unsupported configuration: {0}")]
    Unsupported(String),

    /// Training produced a non-finite loss or gradient.
    #[error("training diverged: {0}")]
    TrainingDiverged(String),

    /// A statistical routine received a sample it cannot work with
    /// (e.g. zero-variance differences in the paired t-test).
    #[error("degenerate sample: {0}")]
    DegenerateSample(String),

    /// A cost matrix flagged as clinical fails the expert ordering.
    #[error("clinical ordering violated: {}", violations.join("; "))]
    ClinicalOrdering { violations: Vec<String> },

    /// A text file could not be parsed; `line` is 1-based.
    #[error("parse error at line {line}: {msg}")]
    Parse { line: usize, msg: String },

    #[error("i/o error: {0}")]
    Io(#[from] std::io::Error),
}
