use thiserror::Error;

pub type Result<T, E = Error> = std::result::Result<T, E>;

#[derive(Debug, Error)]
pub enum Error {
    #[error("dimension mismatch in {op}: {detail}")]
    Shape { op: &'static str, detail: String },

    #[error("unsupported transform length {0}: length must be even and at least 2")]
    UnsupportedLength(usize),

    #[error("index {index} out of range for {what} of size {len}")]
    OutOfRange {
        what: &'static str,
        index: usize,
        len: usize,
    },

    #[error("cannot partition {0} bins into three bands (need at least 3)")]
    Partition(usize),

    #[error("invalid band [{lo}, {hi}) for {bins} bins")]
    InvalidBand { lo: usize, hi: usize, bins: usize },

    #[error("numeric error: {0}")]
    Numeric(String),

    #[error("invalid configuration: {0}")]
    Config(String),

    #[error("ingestion error at row {row}, column {column}: {message}")]
    Ingest {
        row: usize,
        column: usize,
        message: String,
    },

    #[error("empty data: {0}")]
    Empty(String),

    #[error("training diverged at epoch {epoch}, step {step}: loss is not finite")]
    Divergence { epoch: usize, step: usize },

    #[error("contract violated: {0}")]
    Contract(String),

    #[error("checkpoint error: {0}")]
    Checkpoint(String),

    #[error(transparent)]
    Io(#[from] std::io::Error),

    #[error(transparent)]
    Csv(#[from] csv::Error),

    #[error(transparent)]
    Json(#[from] serde_json::Error),
}

impl Error {
    pub(crate) fn shape(op: &'static str, detail: impl Into<String>) -> Self {
        Error::Shape {
            op,
            detail: detail.into(),
        }
    }
}
