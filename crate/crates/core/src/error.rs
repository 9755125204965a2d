use thiserror::Error;

/// Errors produced by fitting, metrics, simulation, analysis and file I/O.
#[derive(Debug, Error)]
pub enum Error {
    #[error("empty input: {0}")]
    EmptyInput(String),

    #[error("records for more than one video passed to a single-video fit (saw `{first}` and `{other}`)")]
    MixedVideos { first: String, other: String },

    #[error("length mismatch: {left} vs {right}")]
    LengthMismatch { left: usize, right: usize },

    #[error("too few items: need at least {needed}, got {got}")]
    TooFewItems { needed: usize, got: usize },

    #[error("zero variance in {0}")]
    ZeroVariance(&'static str),

    #[error("invalid range: {0}")]
    InvalidRange(String),

    #[error("predicted table has {} video(s) missing from the truth table: {}", .0.len(), .0.join(", "))]
    MissingVideos(Vec<String>),

    #[error("annotated video(s) missing from the score table: {}", .0.join(", "))]
    MissingScores(Vec<String>),

    #[error("need at least 2 participants, got {0}")]
    TooFewParticipants(usize),

    #[error("need at least {needed} non-empty lag bins, got {got}")]
    TooFewBins { needed: usize, got: usize },

    #[error("invalid simulation spec: {0}")]
    InvalidSpec(String),

    #[error("invalid value: {0}")]
    InvalidValue(String),

    #[error("{source_name}: line {line}: schema error: {message}")]
    Schema {
        source_name: String,
        line: u64,
        message: String,
    },

    #[error("{source_name}: line {line}: {message}")]
    Value {
        source_name: String,
        line: u64,
        message: String,
    },

    #[error("cannot access {path}")]
    Io {
        path: String,
        #[source]
        source: std::io::Error,
    },

    #[error(transparent)]
    Csv(#[from] csv::Error),

    #[error(transparent)]
    Json(#[from] serde_json::Error),
}

pub type Result<T, E = Error> = std::result::Result<T, E>;
