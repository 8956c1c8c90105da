use std::path::PathBuf;

use thiserror::Error;

pub type Result<T, E = Error> = std::result::Result<T, E>;

#[derive(Debug, Error)]
pub enum Error {
    #[error("io error at {path}: {source}")]
    Io {
        path: PathBuf,
        #[source]
        source: std::io::Error,
    },

    #[error("json error: {0}")]
    Json(#[from] serde_json::Error),

    #[error("duplicate question id {0:?}")]
    DuplicateId(String),

    #[error("unknown question id {0:?}")]
    UnknownQuestion(String),

    #[error("empty question list")]
    EmptyQuestions,

    #[error("unsupported model family {0:?}")]
    UnsupportedFamily(String),

    #[error("unknown condition {0:?}")]
    UnknownCondition(String),

    #[error("no auxiliary question available for band {0}")]
    EmptyAuxPool(String),

    #[error("corpus has {have} questions but {need} are required per prompt")]
    CorpusTooSmall { have: usize, need: usize },

    #[error("empty plan")]
    EmptyPlan,

    #[error("vocabulary file missing: {0}")]
    MissingVocabulary(PathBuf),

    #[error("missing verdict for segment {0}")]
    MissingVerdict(String),

    #[error("nothing to emit")]
    NothingToEmit,

    #[error("compression rate undefined for zero baseline length")]
    UndefinedRho,

    #[error("empty group {0}")]
    EmptyGroup(String),

    #[error("question {question} has {have} samples, expected {expected}")]
    SampleCountMismatch {
        question: String,
        have: usize,
        expected: usize,
    },

    #[error("baseline accuracy missing or zero")]
    MissingBaseline,

    #[error("benchmark sets differ: {0}")]
    BenchmarkMismatch(String),

    #[error("empty lexicon category {0}")]
    EmptyLexiconCategory(String),

    #[error("invalid config: {}", .0.join("; "))]
    InvalidConfig(Vec<String>),

    #[error("manifest error: {0}")]
    Manifest(String),

    #[error("stage {stage} failed: {message}")]
    Stage { stage: String, message: String },
}

impl Error {
    pub(crate) fn io(path: impl Into<PathBuf>, source: std::io::Error) -> Self {
        Error::Io {
            path: path.into(),
            source,
        }
    }
}
