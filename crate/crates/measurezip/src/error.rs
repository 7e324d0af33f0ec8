use std::path::PathBuf;

use thiserror::Error;

/// Convenience alias used throughout the crate.
pub type Result<T> = std::result::Result<T, Error>;

fn format_duplicates(pairs: &[(usize, usize)]) -> String {
    if pairs.is_empty() {
        return String::new();
    }
    let listed: Vec<String> = pairs
        .iter()
        .take(8)
        .map(|(i, j)| format!("({i}, {j})"))
        .collect();
    let suffix = if pairs.len() > 8 { ", ..." } else { "" };
    format!(
        "; near-duplicate control pairs: {}{}",
        listed.join(", "),
        suffix
    )
}

/// Error type shared by every module in the crate.
#[derive(Debug, Error)]
pub enum Error {
    #[error("cannot access {path}: {source}")]
    Io {
        path: PathBuf,
        #[source]
        source: std::io::Error,
    },

    #[error("{path}:{line}: {message}")]
    Parse {
        path: PathBuf,
        /// 1-based line number for text formats; element ordinal for binary PLY.
        line: usize,
        message: String,
    },

    #[error("mesh has no spatial extent (all vertices coincide)")]
    DegenerateExtent,

    #[error("measure would be empty ({dropped} zero-area triangles dropped)")]
    EmptyMeasure { dropped: usize },

    #[error("base space mismatch: {left} vs {right}")]
    SpaceMismatch { left: String, right: String },

    #[error("dimension mismatch: {0}")]
    DimensionMismatch(String),

    #[error("dense path requires n <= {cap}, got n = {n}")]
    CapExceeded { n: usize, cap: usize },

    #[error(
        "Cholesky factorization failed at relative jitter {max_jitter:.1e}{}",
        format_duplicates(near_duplicates)
    )]
    Factorization {
        max_jitter: f64,
        near_duplicates: Vec<(usize, usize)>,
    },

    #[error("geodesic integration produced non-finite state at step {step}")]
    Divergence { step: usize },

    #[error("invalid argument: {0}")]
    InvalidArgument(String),
}

impl Error {
    pub fn io(path: impl Into<PathBuf>, source: std::io::Error) -> Self {
        Error::Io {
            path: path.into(),
            source,
        }
    }

    pub fn parse(path: impl Into<PathBuf>, line: usize, message: impl Into<String>) -> Self {
        Error::Parse {
            path: path.into(),
            line,
            message: message.into(),
        }
    }
}
