use std::path::PathBuf;

use thiserror::Error;

pub type Result<T, E = Error> = std::result::Result<T, E>;

#[derive(Debug, Error)]
pub enum Error {
    #[error("{}: {source}", path.display())]
    Io {
        path: PathBuf,
        #[source]
        source: std::io::Error,
    },

    #[error("{}:{line}: {msg}", path.display())]
    Parse {
        path: PathBuf,
        line: usize,
        msg: String,
    },

    #[error("dimension mismatch: {0}")]
    Dimension(String),

    #[error("invalid graph: {0}")]
    InvalidGraph(String),

    #[error("invalid argument: {0}")]
    InvalidArgument(String),

    #[error("training diverged at epoch {epoch} (loss {loss})")]
    Diverged { epoch: usize, loss: f64 },

    #[error("transport problem with {arcs} arcs exceeds the exact-solver limit of {limit}; use the entropic solver or force")]
    TooLarge { arcs: usize, limit: usize },

    #[error("lcm({a}, {b}) overflows the integer mass representation; use the entropic solver")]
    LcmOverflow { a: usize, b: usize },

    #[error("optimality certificate failed: {0}")]
    Certificate(String),

    #[error("no valid pairs: {0}")]
    NoValidPairs(String),

    #[error("no positive training margins to select gamma from")]
    NoPositiveMargins,

    #[error("adjacency matrix is not symmetric")]
    Asymmetric,

    #[error("checkpoint: {0}")]
    Checkpoint(String),

    #[error(transparent)]
    Json(#[from] serde_json::Error),

    #[error(transparent)]
    Csv(#[from] csv::Error),
}

impl Error {
    pub(crate) fn io(path: impl Into<PathBuf>, source: std::io::Error) -> Self {
        Error::Io {
            path: path.into(),
            source,
        }
    }

    pub(crate) fn parse(path: impl Into<PathBuf>, line: usize, msg: impl Into<String>) -> Self {
        Error::Parse {
            path: path.into(),
            line,
            msg: msg.into(),
        }
    }
}
