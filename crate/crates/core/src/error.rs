use std::path::PathBuf;

use thiserror::Error;

pub type Result<T> = std::result::Result<T, Error>;

/// Every failure the toolkit can report. Variants are grouped by the exit
/// code the CLI maps them to.
#[derive(Debug, Error)]
pub enum Error {
    #[error("config error: {0}")]
    Config(String),

    #[error("missing column `{0}`")]
    MissingColumn(String),

    #[error("data error: {0}")]
    Data(String),

    #[error("schema mismatch, differing columns: {}", .0.join(", "))]
    SchemaMismatch(Vec<String>),

    #[error("capacity exceeded: {0}")]
    Capacity(String),

    #[error("fit error: {0}")]
    Fit(String),

    #[error("{stage} stage failed: {source}")]
    Stage {
        stage: &'static str,
        #[source]
        source: Box<Error>,
    },

    #[error("i/o error on {path}: {source}")]
    Io {
        path: PathBuf,
        #[source]
        source: std::io::Error,
    },

    #[error("csv error: {0}")]
    Csv(#[from] csv::Error),

    #[error("json error: {0}")]
    Json(#[from] serde_json::Error),
}

impl Error {
    pub fn io(path: impl Into<PathBuf>, source: std::io::Error) -> Self {
        Error::Io {
            path: path.into(),
            source,
        }
    }

    /// Wraps an error with the pipeline stage it came from.
    pub fn in_stage(self, stage: &'static str) -> Self {
        match self {
            Error::Stage { .. } => self,
            other => Error::Stage {
                stage,
                source: Box::new(other),
            },
        }
    }

    /// Process exit code: 2 config, 3 data, 4 capacity/fit.
    pub fn exit_code(&self) -> i32 {
        match self {
            Error::Config(_) | Error::MissingColumn(_) => 2,
            Error::Data(_)
            | Error::SchemaMismatch(_)
            | Error::Io { .. }
            | Error::Csv(_)
            | Error::Json(_) => 3,
            Error::Capacity(_) | Error::Fit(_) => 4,
            Error::Stage { source, .. } => source.exit_code(),
        }
    }
}
