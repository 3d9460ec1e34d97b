use std::path::PathBuf;

use thiserror::Error;

pub type Result<T, E = Error> = std::result::Result<T, E>;

#[derive(Debug, Error)]
pub enum Error {
    #[error("{path}: {source}")]
    Io {
        path: PathBuf,
        #[source]
        source: std::io::Error,
    },

    #[error("{path}: malformed record {record}: {message}")]
    Malformed {
        path: PathBuf,
        record: String,
        message: String,
    },

    #[error("room {room} references unknown item {item}")]
    DanglingReference { room: String, item: String },

    #[error("{id}: dimension mismatch (expected {expected}, found {found})")]
    DimensionMismatch {
        id: String,
        expected: usize,
        found: usize,
    },

    #[error("duplicate id {0}")]
    DuplicateId(String),

    #[error("cannot normalize a zero vector")]
    ZeroVector,

    #[error("vector contains a non-finite component at position {0}")]
    NonFinite(usize),

    #[error("unknown class {0}")]
    UnknownClass(String),

    #[error("unknown item {0}")]
    UnknownItem(String),

    #[error("unknown room {0}")]
    UnknownRoom(String),

    #[error("invalid configuration: {0}")]
    InvalidConfig(String),

    #[error("need at least {needed} descriptors, found {found}")]
    TooFewDescriptors { needed: usize, found: usize },

    #[error("query is empty")]
    EmptyQuery,

    #[error("no query token is in the word-vector vocabulary: {}", tokens.join(" "))]
    AllTokensOov { tokens: Vec<String> },

    #[error("room {0} has an empty ground truth")]
    EmptyGroundTruth(String),

    #[error("room {0} has results but no ground truth")]
    MissingGroundTruth(String),

    #[error("co-occurrence matrix is degenerate: no pair of distinct items ever co-occurs")]
    DegenerateCooccurrence,

    #[error("style similarity is undefined for identical items ({0})")]
    SelfPair(String),

    #[error("item {0} has no visual feature")]
    MissingFeature(String),

    #[error("missing ROI feature for detection row {row} of room {room}")]
    MissingRoiFeature { room: String, row: usize },

    #[error("nothing to process: {0}")]
    EmptyInput(&'static str),

    #[error("missing artifact {0}")]
    MissingArtifact(PathBuf),

    #[error("json: {0}")]
    Json(#[from] serde_json::Error),
}

impl Error {
    pub(crate) fn io(path: impl Into<PathBuf>, source: std::io::Error) -> Self {
        Error::Io {
            path: path.into(),
            source,
        }
    }

    pub(crate) fn malformed(
        path: impl Into<PathBuf>,
        record: impl ToString,
        message: impl Into<String>,
    ) -> Self {
        Error::Malformed {
            path: path.into(),
            record: record.to_string(),
            message: message.into(),
        }
    }
}
