use std::path::PathBuf;

pub type Result<T, E = Error> = std::result::Result<T, E>;

#[derive(Debug, thiserror::Error)]
pub enum Error {
    #[error("{path}: no records")]
    NoRecords { path: PathBuf },

    #[error("{path}:{line}: malformed record: {reason}")]
    MalformedRecord {
        path: PathBuf,
        line: usize,
        reason: String,
    },

    #[error("unknown label {value:?}")]
    UnknownLabel { value: String },

    #[error("citance without exactly one {tag} in samples: {ids:?}", tag = crate::CITATION_TAG)]
    MissingAnchor { ids: Vec<String> },

    #[error("invalid corpus: {0}")]
    InvalidCorpus(String),

    #[error("span {start}..{end} out of bounds for text of {len} characters")]
    SpanOutOfBounds { start: usize, end: usize, len: usize },

    #[error("fraction must lie in (0, 1), got {0}")]
    InvalidFraction(f64),

    #[error("probability {name} must lie in [0, 1], got {value}")]
    InvalidProbability { name: &'static str, value: f64 },

    #[error("no parseable JSON object in response: {raw:?}")]
    Parse { raw: String },

    #[error("dimension mismatch: {0}")]
    Dimension(String),

    #[error("length mismatch: {left} vs {right}")]
    LengthMismatch { left: usize, right: usize },

    #[error("empty input: {0}")]
    Empty(&'static str),

    #[error("invalid value: {0}")]
    Invalid(String),

    #[error("configuration: {0}")]
    Config(String),

    #[error("text generation service: {0}")]
    Service(String),

    #[error("i/o error on {path}: {source}")]
    Io {
        path: PathBuf,
        #[source]
        source: std::io::Error,
    },

    #[error(transparent)]
    Json(#[from] serde_json::Error),
}

impl Error {
    pub(crate) fn io(path: impl Into<PathBuf>, source: std::io::Error) -> Self {
        Error::Io {
            path: path.into(),
            source,
        }
    }
}
