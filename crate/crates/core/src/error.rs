use thiserror::Error;

pub type Result<T, E = Error> = std::result::Result<T, E>;

#[derive(Debug, Error, Clone, PartialEq)]
pub enum Error {
    #[error("dimension mismatch in {what}: expected {expected}, found {found}")]
    DimensionMismatch {
        what: &'static str,
        expected: usize,
        found: usize,
    },

    #[error("dataset is empty")]
    EmptyDataset,

    #[error("invalid argument `{name}`: {reason}")]
    InvalidArgument { name: &'static str, reason: String },

    #[error("trajectory of length {len} is too short, need at least {required}")]
    TooShort { len: usize, required: usize },

    #[error("no reference point has enough valid neighbours; check epsilon and tau")]
    NoValidPairs,

    #[error("separation between reference and perturbed trajectory collapsed to zero")]
    ZeroSeparation,

    #[error("all ensemble members diverged")]
    Diverged,

    #[error("only {found} candidate(s) survived the initial-loss filter, need at least 2")]
    InsufficientCandidates { found: usize },

    #[error("config key `{key}`: {reason}")]
    Config { key: String, reason: String },

    #[error("io error: {0}")]
    Io(String),
}

impl From<std::io::Error> for Error {
    fn from(e: std::io::Error) -> Self {
        Error::Io(e.to_string())
    }
}

pub(crate) fn invalid(name: &'static str, reason: impl Into<String>) -> Error {
    Error::InvalidArgument {
        name,
        reason: reason.into(),
    }
}
