use std::path::PathBuf;

/// Errors produced anywhere in the toolkit.
#[derive(Debug, thiserror::Error)]
pub enum Error {
    #[error("{op}: shape mismatch between {left:?} and {right:?}")]
    Shape {
        op: &'static str,
        left: Vec<usize>,
        right: Vec<usize>,
    },

    #[error("backward requires a scalar loss, got shape {0:?}")]
    NonScalarLoss(Vec<usize>),

    #[error("non-finite gradient in parameter `{0}`")]
    NonFiniteGradient(String),

    #[error("analytic and numeric gradients disagree: {0}")]
    GradientMismatch(String),

    #[error("non-finite loss at update {step}; batch dumped to {}", dump.display())]
    NonFiniteLoss { step: usize, dump: PathBuf },

    #[error("non-finite loss at update {step}: {batch}")]
    NonFiniteLossInline { step: usize, batch: String },

    #[error("empty input: {0}")]
    EmptyInput(&'static str),

    #[error("{what} id {id} out of range (limit {limit})")]
    OutOfRange {
        what: &'static str,
        id: usize,
        limit: usize,
    },

    #[error("unknown task `{0}`")]
    UnknownTask(String),

    #[error("slope {slope} is invalid for the {kind} schedule")]
    InvalidSlope { kind: &'static str, slope: f64 },

    #[error("malformed probability distribution: {0}")]
    MalformedDistribution(String),

    #[error("sentence {index}: {what} has {found} entries but the sentence has {expected} tokens")]
    LengthMismatch {
        index: usize,
        what: &'static str,
        expected: usize,
        found: usize,
    },

    #[error("token `{token}` is not in the closed {what} vocabulary")]
    UnseenToken { what: &'static str, token: String },

    #[error("{}:{line}: {message}", path.display())]
    Parse {
        path: PathBuf,
        line: usize,
        message: String,
    },

    #[error("config: {0}")]
    Config(String),

    #[error("checkpoint: {0}")]
    Checkpoint(String),

    #[error("{}: {source}", path.display())]
    Io {
        path: PathBuf,
        #[source]
        source: std::io::Error,
    },
}

/// Coarse error classes, used by the command line for exit codes.
#[derive(Clone, Copy, Debug, PartialEq, Eq)]
pub enum ErrorClass {
    Io,
    Config,
    Shape,
    Numeric,
    Data,
}

impl ErrorClass {
    pub fn name(self) -> &'static str {
        match self {
            ErrorClass::Io => "io",
            ErrorClass::Config => "config",
            ErrorClass::Shape => "shape",
            ErrorClass::Numeric => "numeric",
            ErrorClass::Data => "data",
        }
    }
}

impl Error {
    pub fn io(path: impl Into<PathBuf>, source: std::io::Error) -> Self {
        Error::Io {
            path: path.into(),
            source,
        }
    }

    pub fn class(&self) -> ErrorClass {
        match self {
            Error::Io { .. } => ErrorClass::Io,
            Error::Config(_) | Error::InvalidSlope { .. } | Error::UnknownTask(_) => {
                ErrorClass::Config
            }
            Error::Shape { .. } | Error::NonScalarLoss(_) | Error::OutOfRange { .. } => {
                ErrorClass::Shape
            }
            Error::NonFiniteGradient(_)
            | Error::GradientMismatch(_)
            | Error::NonFiniteLoss { .. }
            | Error::NonFiniteLossInline { .. }
            | Error::MalformedDistribution(_) => ErrorClass::Numeric,
            Error::EmptyInput(_)
            | Error::LengthMismatch { .. }
            | Error::UnseenToken { .. }
            | Error::Parse { .. }
            | Error::Checkpoint(_) => ErrorClass::Data,
        }
    }
}

pub type Result<T, E = Error> = std::result::Result<T, E>;
