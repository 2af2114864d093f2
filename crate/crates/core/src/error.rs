use std::path::PathBuf;

use thiserror::Error;

pub type Result<T> = std::result::Result<T, Error>;

/// Every failure the toolkit can report.
///
/// The variants are grouped by the CLI exit code they map to, see
/// [`Error::exit_code`].
#[derive(Debug, Error)]
pub enum Error {
    #[error("shape mismatch in {op}: {left} vs {right}")]
    Shape {
        op: &'static str,
        left: String,
        right: String,
    },

    #[error("configuration error: {0}")]
    Config(String),

    #[error("model file error in section {section}: {msg}")]
    ModelFormat { section: String, msg: String },

    #[error("empty data: {0}")]
    EmptyData(String),

    #[error("degenerate column '{column}': {msg}")]
    Degenerate { column: String, msg: String },

    #[error("schema error: missing column '{column}' in {path}")]
    Schema { column: String, path: String },

    #[error("temporal error for '{series}' at {date}: {msg}")]
    Temporal {
        series: String,
        date: String,
        msg: String,
    },

    #[error("parse error at row {row}: {msg}")]
    Parse { row: usize, msg: String },

    #[error("alignment error: {0}")]
    Alignment(String),

    #[error("io error on {}: {source}", path.display())]
    Io {
        path: PathBuf,
        #[source]
        source: std::io::Error,
    },

    #[error("numeric error: {0}")]
    Numeric(String),
}

impl Error {
    pub(crate) fn shape(op: &'static str, left: impl ToString, right: impl ToString) -> Self {
        Error::Shape {
            op,
            left: left.to_string(),
            right: right.to_string(),
        }
    }

    pub(crate) fn io(path: impl Into<PathBuf>, source: std::io::Error) -> Self {
        Error::Io {
            path: path.into(),
            source,
        }
    }

    pub(crate) fn model_format(section: &str, msg: impl Into<String>) -> Self {
        Error::ModelFormat {
            section: section.to_owned(),
            msg: msg.into(),
        }
    }

    /// Process exit code: 1 config/model file, 2 data, 3 numeric.
    pub fn exit_code(&self) -> i32 {
        match self {
            Error::Config(_) | Error::ModelFormat { .. } => 1,
            Error::Numeric(_) => 3,
            Error::Shape { .. }
            | Error::EmptyData(_)
            | Error::Degenerate { .. }
            | Error::Schema { .. }
            | Error::Temporal { .. }
            | Error::Parse { .. }
            | Error::Alignment(_)
            | Error::Io { .. } => 2,
        }
    }
}
