use std::path::PathBuf;

use thiserror::Error;

pub type Result<T> = std::result::Result<T, Error>;

#[derive(Debug, Error)]
pub enum Error {
    #[error("io error on {path}: {source}")]
    Io {
        path: PathBuf,
        #[source]
        source: std::io::Error,
    },

    #[error("unknown corpus format `{0}` (expected `jsonl` or `json`)")]
    UnknownFormat(String),

    #[error("corpus contains no valid dialogues")]
    EmptyCorpus,

    #[error("duplicate dialogue_id `{0}`")]
    DuplicateDialogue(String),

    #[error("invalid argument: {0}")]
    InvalidArgument(String),

    #[error("no co-occurrence of phrase `{phrase}` with product `{product}`")]
    NoCooccurrence { phrase: String, product: String },

    #[error("dimension mismatch: expected {expected}, got {actual}")]
    DimensionMismatch { expected: usize, actual: usize },

    #[error("non-finite value in {0}")]
    NonFinite(&'static str),

    #[error("embedding provider failed after {attempts} attempts; missing phrases: {missing:?}")]
    ProviderUnavailable { attempts: u32, missing: Vec<String> },

    #[error("silhouette undefined: need at least 2 non-noise clusters, got {0}")]
    SilhouetteUndefined(usize),

    #[error("all clustering configurations are degenerate")]
    DegenerateClustering,

    #[error("unknown expert `{0}`")]
    UnknownExpert(String),

    #[error("unknown cluster `{0}`")]
    UnknownCluster(usize),

    #[error("training labels contain a single class")]
    SingleClass,

    #[error("all candidate models failed to train")]
    NoCandidateTrained,

    #[error("missing artifact: {artifact}")]
    MissingArtifact { artifact: String, stage: String },

    #[error("registry hash mismatch: model built for {expected}, found {actual}")]
    RegistrySkew { expected: String, actual: String },

    #[error("store {0} is locked by another run")]
    StoreLocked(PathBuf),

    #[error("invalid configuration: {0}")]
    Config(String),

    #[error("parse error: {0}")]
    Parse(String),

    #[error("http error: {0}")]
    Http(String),

    #[error(transparent)]
    Json(#[from] serde_json::Error),

    #[error(transparent)]
    Csv(#[from] csv::Error),
}

impl Error {
    pub fn io(path: impl Into<PathBuf>, source: std::io::Error) -> Self {
        Error::Io {
            path: path.into(),
            source,
        }
    }

    /// Short machine-readable tag used by the command-line error line.
    pub fn kind(&self) -> &'static str {
        match self {
            Error::Io { .. } => "io",
            Error::UnknownFormat(_) => "unknown_format",
            Error::EmptyCorpus => "empty_corpus",
            Error::DuplicateDialogue(_) => "duplicate_dialogue",
            Error::InvalidArgument(_) => "invalid_argument",
            Error::NoCooccurrence { .. } => "no_cooccurrence",
            Error::DimensionMismatch { .. } => "dimension_mismatch",
            Error::NonFinite(_) => "non_finite",
            Error::ProviderUnavailable { .. } => "provider_unavailable",
            Error::SilhouetteUndefined(_) => "silhouette_undefined",
            Error::DegenerateClustering => "degenerate_clustering",
            Error::UnknownExpert(_) => "unknown_expert",
            Error::UnknownCluster(_) => "unknown_cluster",
            Error::SingleClass => "single_class",
            Error::NoCandidateTrained => "no_candidate_trained",
            Error::MissingArtifact { .. } => "missing_artifact",
            Error::RegistrySkew { .. } => "registry_skew",
            Error::StoreLocked(_) => "store_locked",
            Error::Config(_) => "config",
            Error::Parse(_) => "parse",
            Error::Http(_) => "http",
            Error::Json(_) => "json",
            Error::Csv(_) => "csv",
        }
    }
}
