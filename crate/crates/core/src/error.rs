use thiserror::Error;

pub type Result<T> = std::result::Result<T, Error>;

#[derive(Debug, Error)]
pub enum Error {
    #[error("malformed record at index {index}: {reason}")]
    MalformedRecord { index: usize, reason: String },

    #[error("split sizes request {requested} items but corpus has {available} (short by {shortfall})")]
    SplitTooLarge {
        requested: usize,
        available: usize,
        shortfall: usize,
    },

    #[error("invalid configuration: {0}")]
    InvalidConfig(String),

    #[error("dimension mismatch: expected {expected}, got {actual}")]
    DimensionMismatch { expected: usize, actual: usize },

    #[error("empty corpus: {0}")]
    EmptyCorpus(String),

    #[error("degenerate training set: {0}")]
    DegenerateTrainingSet(String),

    #[error("non-finite value in {0}")]
    NonFinite(String),

    #[error("checkpoint error: {0}")]
    Checkpoint(String),

    #[error("fingerprint mismatch: index built by {index}, model is {model}")]
    FingerprintMismatch { index: String, model: String },

    #[error("alpha must lie in [0, 1], got {0}")]
    AlphaOutOfRange(f64),

    #[error("rank must be >= 1, got {0}")]
    InvalidRank(usize),

    #[error("no shared-option structure: {0}")]
    NoPairs(String),

    #[error("pool mismatch: {0}")]
    PoolMismatch(String),

    #[error("no evaluable queries")]
    NoEvaluableQueries,

    #[error("invalid contingency table: {0}")]
    InvalidTable(String),

    #[error("annotation error: {0}")]
    Annotation(String),

    #[error("invalid label: {0}")]
    InvalidLabel(String),

    #[error("not found: {0}")]
    NotFound(String),

    #[error("model not loaded: {requested}; available: {available:?}")]
    ModelNotLoaded {
        requested: String,
        available: Vec<String>,
    },

    #[error("io error: {0}")]
    Io(#[from] std::io::Error),

    #[error("json error: {0}")]
    Json(#[from] serde_json::Error),
}

impl Error {
    /// Stable machine-readable error kind.
    pub fn kind(&self) -> &'static str {
        match self {
            Error::MalformedRecord { .. } => "malformed_record",
            Error::SplitTooLarge { .. } => "split_too_large",
            Error::InvalidConfig(_) => "invalid_config",
            Error::DimensionMismatch { .. } => "dimension_mismatch",
            Error::EmptyCorpus(_) => "empty_corpus",
            Error::DegenerateTrainingSet(_) => "degenerate_training_set",
            Error::NonFinite(_) => "non_finite",
            Error::Checkpoint(_) => "checkpoint",
            Error::FingerprintMismatch { .. } => "fingerprint_mismatch",
            Error::AlphaOutOfRange(_) => "alpha_out_of_range",
            Error::InvalidRank(_) => "invalid_rank",
            Error::NoPairs(_) => "no_pairs",
            Error::PoolMismatch(_) => "pool_mismatch",
            Error::NoEvaluableQueries => "no_evaluable_queries",
            Error::InvalidTable(_) => "invalid_table",
            Error::Annotation(_) => "annotation",
            Error::InvalidLabel(_) => "invalid_label",
            Error::NotFound(_) => "not_found",
            Error::ModelNotLoaded { .. } => "model_not_loaded",
            Error::Io(_) => "io",
            Error::Json(_) => "json",
        }
    }
}
