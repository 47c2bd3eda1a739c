use thiserror::Error;

pub type Result<T, E = Error> = std::result::Result<T, E>;

#[derive(Debug, Error)]
pub enum Error {
    #[error("invalid clip range ({c_min}, {c_max}): bounds must be finite with c_min < c_max")]
    InvalidClipRange { c_min: f64, c_max: f64 },

    #[error("invalid epsilon {0}: must be finite and > 0")]
    InvalidEpsilon(f64),

    #[error("non-finite logit {value} at index {index}")]
    NonFiniteLogit { index: usize, value: f64 },

    #[error("empty logit vector")]
    EmptyLogits,

    #[error("non-finite calibration sample {0}")]
    NonFiniteSample(f64),

    #[error("insufficient samples for calibration: {0} (need at least 2)")]
    InsufficientSamples(u64),

    #[error("degenerate variance: all {0} calibration samples are identical")]
    DegenerateVariance(u64),

    #[error("corpus is empty")]
    EmptyCorpus,

    #[error("invalid mask query: {0}")]
    InvalidQuery(String),

    #[error("invalid vocabulary: {0}")]
    InvalidVocabulary(String),

    #[error("remote scorer unavailable: {0}")]
    RemoteUnavailable(String),

    #[error("scorer protocol violation: {0}")]
    ProtocolViolation(String),

    #[error("scorer backend error: {0}")]
    Backend(String),

    #[error("embedder unavailable: {0}")]
    EmbedderUnavailable(String),

    #[error("state space too large: {pairs} context pairs exceeds limit {limit}")]
    StateSpaceTooLarge { pairs: u128, limit: u128 },

    #[error("scorer is not deterministic; exhaustive verification requires an enumerable scorer")]
    NonDeterministicScorer,

    #[error("ledger epsilon mismatch: {0} vs {1}")]
    EpsilonMismatch(f64, f64),

    #[error("invalid argument: {0}")]
    InvalidArgument(String),

    #[error("line {line}: {message}")]
    Parse { line: usize, message: String },

    #[error(transparent)]
    Io(#[from] std::io::Error),
}
