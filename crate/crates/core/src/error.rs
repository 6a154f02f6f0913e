// SPDX-License-Identifier: MIT OR Apache-2.0

use std::path::PathBuf;

/// Crate-wide result alias.
pub type Result<T> = std::result::Result<T, Error>;

/// Every failure the library can report.
///
/// Variants fall into two families that the CLI maps onto exit codes:
/// configuration problems ([`Error::is_config`]) and data problems (everything
/// else).
#[derive(Debug, thiserror::Error)]
pub enum Error {
    #[error("i/o error on {path}: {source}")]
    Io {
        path: PathBuf,
        #[source]
        source: std::io::Error,
    },

    #[error("npy parse error in {path} at byte offset {offset}: {kind}")]
    NpyParse {
        path: PathBuf,
        offset: usize,
        kind: NpyErrorKind,
    },

    #[error("json error in {path}: {message}")]
    Json { path: PathBuf, message: String },

    #[error("configuration error: {0}")]
    Config(String),

    #[error("validation error: {0}")]
    Validation(String),

    #[error("domain error: {0}")]
    Domain(String),

    #[error("degenerate data: {0}")]
    Degenerate(String),

    #[error("perplexity calibration did not converge for row {row}: {detail}")]
    Calibration { row: usize, detail: String },

    #[error("projection error: {0}")]
    Projection(String),

    #[error("missing activation for document '{doc_id}' at layer {layer} ({pooling}); looked in {path}")]
    MissingActivation {
        doc_id: String,
        layer: usize,
        pooling: String,
        path: PathBuf,
    },

    #[error("schema violation at {path}: {message}")]
    Schema { path: String, message: String },
}

/// What went wrong while decoding an NPY file.
#[derive(Debug, Clone, PartialEq, Eq, thiserror::Error)]
pub enum NpyErrorKind {
    #[error("bad magic string")]
    BadMagic,
    #[error("unsupported format version {0}.{1}")]
    UnsupportedVersion(u8, u8),
    #[error("malformed header: {0}")]
    MalformedHeader(String),
    #[error("truncated payload: expected {expected} bytes, found {found}")]
    Truncated { expected: usize, found: usize },
    #[error("trailing bytes after payload: {0}")]
    TrailingBytes(usize),
}

impl Error {
    pub(crate) fn io(path: impl Into<PathBuf>, source: std::io::Error) -> Self {
        Error::Io {
            path: path.into(),
            source,
        }
    }

    /// True for errors caused by the user's configuration rather than by data.
    pub fn is_config(&self) -> bool {
        matches!(self, Error::Config(_) | Error::Json { .. })
    }
}
