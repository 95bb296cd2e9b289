use std::path::PathBuf;

use thiserror::Error;

pub type Result<T> = std::result::Result<T, Error>;

#[derive(Debug, Error)]
pub enum Error {
    #[error("{path}: {source}")]
    Io {
        path: PathBuf,
        #[source]
        source: std::io::Error,
    },

    // corpus
    #[error("no tokens survive preprocessing")]
    EmptyInput,
    #[error("corpus contains no usable lines")]
    EmptyCorpus,
    #[error("reserved marker {0:?} found inside raw text")]
    ReservedMarker(String),

    // embeddings
    #[error("line {line}: expected {expected} values, found {found}")]
    DimMismatch {
        line: usize,
        expected: usize,
        found: usize,
    },
    #[error("duplicate word {0:?} in embedding table")]
    DuplicateWord(String),
    #[error("line {line}: {msg}")]
    Parse { line: usize, msg: String },
    #[error("vector length mismatch: {0} vs {1}")]
    LengthMismatch(usize, usize),
    #[error("embedding table needs at least 2 words, found {0}")]
    VocabularyTooSmall(usize),
    #[error("source word {0:?} has no embedding")]
    UnknownSourceWord(String),
    #[error("candidate set is empty")]
    EmptyCandidateSet,

    // fluency lm
    #[error("n-gram order must be in 1..=5, got {0}")]
    BadOrder(usize),
    #[error("discount must be in [0, 1), got {0}")]
    BadDiscount(f64),
    #[error("word {0:?} is outside the language model vocabulary")]
    UnknownWord(String),
    #[error("partition was not built from this candidate set")]
    PartitionMismatch,
    #[error("temperature must be positive, got {0}")]
    NonPositiveTemperature(f64),
    #[error("ARPA format error at line {line}: {msg}")]
    Arpa { line: usize, msg: String },

    // context encoder
    #[error("format error: {0}")]
    Format(String),
    #[error("token {0:?} cannot be encoded")]
    UnknownToken(String),
    #[error("no precomputed state for prefix ending in {0:?}")]
    MissingPrecomputedState(String),
    #[error("prefix vector requested for an empty prefix")]
    EmptyPrefix,
    #[error("layer combination {combo} needs at least {needed} layers, encoder has {layers}")]
    ComboUnsupported {
        combo: &'static str,
        needed: usize,
        layers: usize,
    },
    #[error("invalid encoder configuration: {0}")]
    BadEncoderConfig(String),

    // matcher
    #[error("alignment window is empty (z_prev = {z_prev}, m + 1 = {end})")]
    EmptyWindow { z_prev: usize, end: usize },
    #[error("token {0:?} is not in the candidate set")]
    NotInCandidates(String),

    // decoder
    #[error("beam search produced no finished hypothesis")]
    NoFinishedHypothesis,
    #[error("length penalty |y| + alpha = {0} is not positive")]
    DegenerateLength(f64),
    #[error("hypothesis pool is empty")]
    EmptyPool,
    #[error("invalid decoder configuration: {0}")]
    BadConfig(String),

    // eval
    #[error("line count mismatch: {predictions} predictions vs {references} references")]
    LineCountMismatch {
        predictions: usize,
        references: usize,
    },
}

impl Error {
    pub(crate) fn io(path: impl Into<PathBuf>, source: std::io::Error) -> Self {
        Error::Io {
            path: path.into(),
            source,
        }
    }
}
