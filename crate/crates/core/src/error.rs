use std::path::PathBuf;

use thiserror::Error;

pub type Result<T> = std::result::Result<T, Error>;

#[derive(Debug, Error)]
pub enum Error {
    #[error("configuration error: {0}")]
    Config(String),

    #[error("shape error: {0}")]
    Shape(String),

    #[error("data error: {0}")]
    Data(String),

    /// A non-finite or exploding value. `term` names the quantity that produced it.
    #[error("numeric error in {term}: {detail}")]
    Numeric { term: String, detail: String },

    #[error("sampling error: {detail} (acceptance rate {acceptance_rate:.3e})")]
    Sampling { detail: String, acceptance_rate: f64 },

    #[error("parse error at line {line}: {detail}")]
    Parse { line: u64, detail: String },

    #[error("correlation undefined: {0}")]
    UndefinedCorrelation(String),

    #[error("i/o error on {path}: {source}")]
    Io {
        path: PathBuf,
        #[source]
        source: std::io::Error,
    },
}

impl Error {
    pub(crate) fn config(msg: impl Into<String>) -> Self {
        Error::Config(msg.into())
    }

    pub(crate) fn shape(msg: impl Into<String>) -> Self {
        Error::Shape(msg.into())
    }

    pub(crate) fn data(msg: impl Into<String>) -> Self {
        Error::Data(msg.into())
    }

    pub(crate) fn numeric(term: impl Into<String>, detail: impl Into<String>) -> Self {
        Error::Numeric {
            term: term.into(),
            detail: detail.into(),
        }
    }

    pub(crate) fn io(path: impl Into<PathBuf>, source: std::io::Error) -> Self {
        Error::Io {
            path: path.into(),
            source,
        }
    }

    /// Process exit code used by the CLI.
    ///
    /// | code | kind |
    /// |------|------|
    /// | 2 | configuration |
    /// | 3 | data, shape, parse, undefined correlation |
    /// | 4 | numeric |
    /// | 5 | sampling |
    /// | 6 | i/o |
    pub fn exit_code(&self) -> i32 {
        match self {
            Error::Config(_) => 2,
            Error::Shape(_) | Error::Data(_) | Error::Parse { .. } | Error::UndefinedCorrelation(_) => 3,
            Error::Numeric { .. } => 4,
            Error::Sampling { .. } => 5,
            Error::Io { .. } => 6,
        }
    }
}

pub(crate) fn ensure_finite(values: &[f64], what: &str) -> Result<()> {
    if let Some(pos) = values.iter().position(|v| !v.is_finite()) {
        return Err(Error::data(format!(
            "{what} contains a non-finite value at flat index {pos}"
        )));
    }
    Ok(())
}
