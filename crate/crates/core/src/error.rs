use std::io;
use std::path::PathBuf;

use thiserror::Error;

pub type Result<T> = std::result::Result<T, Error>;

#[derive(Debug, Error)]
pub enum Error {
    #[error("i/o error on {path}: {source}")]
    Io {
        path: PathBuf,
        #[source]
        source: io::Error,
    },

    #[error("geometry mismatch: {0}")]
    Geometry(String),

    #[error("unsupported bit depth {0}")]
    UnsupportedBitDepth(u32),

    #[error("malformed stream header: {0}")]
    Header(String),

    #[error("invalid input: {0}")]
    InvalidInput(String),

    #[error("encoder binary `{binary}` not found")]
    MissingBinary { binary: String },

    #[error("`{command}` exited with {status}: {stderr}")]
    EncoderFailed {
        command: String,
        status: String,
        stderr: String,
    },

    #[error("pipeline invariant violated: {0}")]
    Pipeline(String),

    #[error("proxy scorer failed: {0}")]
    Scorer(String),

    #[error("empty dataset: {0}")]
    EmptyDataset(String),

    #[error("empty accuracy curve: no trials in any bin")]
    EmptyCurve,

    #[error("target accuracy {target} is not attained by any bin")]
    UnattainableTarget { target: f64 },

    #[error("training diverged at epoch {epoch}: mean loss {loss}")]
    Diverged { epoch: usize, loss: f64 },

    #[error("degenerate input: {0}")]
    Degenerate(String),

    #[error("metric `{name}` failed: {reason}")]
    Metric { name: String, reason: String },

    #[error("json: {0}")]
    Json(#[from] serde_json::Error),

    #[error("csv: {0}")]
    Csv(#[from] csv::Error),
}

impl Error {
    pub(crate) fn io(path: impl Into<PathBuf>, source: io::Error) -> Self {
        Error::Io {
            path: path.into(),
            source,
        }
    }
}

/// Extension for attaching a path to raw `io::Result`s.
pub(crate) trait IoContext<T> {
    fn at(self, path: impl Into<PathBuf>) -> Result<T>;
}

impl<T> IoContext<T> for io::Result<T> {
    fn at(self, path: impl Into<PathBuf>) -> Result<T> {
        self.map_err(|e| Error::io(path, e))
    }
}
