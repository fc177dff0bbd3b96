use std::path::PathBuf;

use thiserror::Error;

pub type Result<T, E = Error> = std::result::Result<T, E>;

#[derive(Debug, Error)]
pub enum Error {
    #[error("i/o error on {}", path.display())]
    Io {
        path: PathBuf,
        #[source]
        source: std::io::Error,
    },

    #[error("line {line}: {message}")]
    Parse { line: usize, message: String },

    #[error("empty corpus")]
    EmptyCorpus,

    #[error("duplicate review id {0:?}")]
    DuplicateReview(String),

    #[error("duplicate item id {0:?}")]
    DuplicateItem(String),

    #[error("duplicate query id {0:?}")]
    DuplicateQuery(String),

    #[error("review {review_id:?}: rating {rating} outside 1..=5")]
    RatingOutOfRange { review_id: String, rating: i64 },

    #[error("invalid record: {0}")]
    InvalidRecord(String),

    #[error("corpus already has item meta-data prepended")]
    AlreadyTransformed,

    #[error("unknown review id {0:?}")]
    UnknownReview(String),

    #[error("unknown item id {0:?}")]
    UnknownItem(String),

    #[error("missing embedding for {0:?}")]
    MissingEmbedding(String),

    #[error("dimension mismatch: expected {expected}, got {actual}")]
    DimensionMismatch { expected: usize, actual: usize },

    #[error("embedding file: {0}")]
    Format(String),

    #[error("empty score list")]
    EmptyScores,

    #[error("item {0:?} has no reviews")]
    EmptyItem(String),

    #[error("no eligible positive for anchor {0:?}")]
    NoEligiblePositive(String),

    #[error("text too short for a span pair: {tokens} tokens")]
    TooShort { tokens: usize },

    #[error("batch of {batch_size} needs {batch_size} distinct items, only {available} available")]
    InfeasibleBatch { batch_size: usize, available: usize },

    #[error("batch invariant violated: {0}")]
    InvalidBatch(String),

    #[error("non-finite value in {0}")]
    NonFinite(String),

    #[error("invalid configuration: {0}")]
    Config(String),

    #[error("query {0:?} has no relevant items")]
    NoRelevant(String),

    #[error("ranking for query {query_id:?} is partial: {detail}")]
    PartialRanking { query_id: String, detail: String },

    #[error("runs disagree on evaluated queries")]
    MismatchedQueries,

    #[error("no runs to aggregate")]
    NoRuns,
}

impl Error {
    pub(crate) fn io(path: impl Into<PathBuf>, source: std::io::Error) -> Self {
        Error::Io {
            path: path.into(),
            source,
        }
    }
}
