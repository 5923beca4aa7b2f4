//! Error types shared across the library.

use thiserror::Error;

/// Unified error type for all library operations.
#[derive(Debug, Error)]
pub enum Error {
    /// Operand dimensions do not agree.
    #[error("shape mismatch in {op}: {detail}")]
    Shape { op: &'static str, detail: String },

    /// A documented precondition was violated.
    #[error("contract violation in {op}: {detail}")]
    Contract { op: &'static str, detail: String },

    /// An iterative routine exhausted its iteration budget.
    #[error("{op} did not converge after {iterations} iterations (last estimate {last_estimate})")]
    NoConvergence {
        op: &'static str,
        iterations: usize,
        last_estimate: f64,
    },

    /// Filesystem failure, tagged with the offending path.
    #[error("io error on {path}: {source}")]
    Io {
        path: String,
        #[source]
        source: std::io::Error,
    },

    /// IDX header carries an unexpected magic number.
    #[error("bad magic in {path}: expected {expected:#010x}, found {found:#010x}")]
    BadMagic {
        path: String,
        expected: u32,
        found: u32,
    },

    /// File ended before the declared payload.
    #[error("truncated file {path}: {detail}")]
    Truncated { path: String, detail: String },

    /// Image and label files disagree on sample count.
    #[error("count mismatch: {images} images vs {labels} labels")]
    CountMismatch { images: usize, labels: usize },

    /// Checkpoint failed structural or checksum validation.
    #[error("corrupt checkpoint {path}: {detail}")]
    CorruptCheckpoint { path: String, detail: String },

    /// Configuration value outside its documented range.
    #[error("invalid config: {detail}")]
    Config { detail: String },
}

impl Error {
    pub fn shape(op: &'static str, detail: impl Into<String>) -> Self {
        Error::Shape {
            op,
            detail: detail.into(),
        }
    }

    pub fn contract(op: &'static str, detail: impl Into<String>) -> Self {
        Error::Contract {
            op,
            detail: detail.into(),
        }
    }

    pub fn config(detail: impl Into<String>) -> Self {
        Error::Config {
            detail: detail.into(),
        }
    }

    pub fn io(path: impl AsRef<std::path::Path>, source: std::io::Error) -> Self {
        Error::Io {
            path: path.as_ref().display().to_string(),
            source,
        }
    }
}

pub type Result<T> = std::result::Result<T, Error>;
