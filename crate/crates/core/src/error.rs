//! Crate-wide error type.
//!
//! Every variant maps to a stable machine-readable code (see [`Error::code`]) which the
//! command-line front end emits in its JSON error objects.

use std::path::PathBuf;

use thiserror::Error;

pub type Result<T, E = Error> = std::result::Result<T, E>;

#[derive(Debug, Error)]
pub enum Error {
    #[error("dimension mismatch: {0}")]
    DimensionMismatch(String),

    #[error("window out of bounds: {0}")]
    OutOfBounds(String),

    #[error("invalid size: {0}")]
    InvalidSize(String),

    #[error("invalid severity {0} (expected 0..=5)")]
    InvalidSeverity(u8),

    #[error("stochastic distortion `{0}` requires a seed")]
    MissingSeed(&'static str),

    #[error("codec failure: {0}")]
    CodecFailure(String),

    #[error("parse error: {0}")]
    Parse(String),

    #[error("schema violation: {0}")]
    SchemaViolation(String),

    #[error("missing file: {}", .0.display())]
    MissingFile(PathBuf),

    #[error("invalid offset index {0} (expected -5..=-1 or 1..=5)")]
    InvalidOffset(i32),

    #[error("bad split fractions: {0}")]
    BadFractions(String),

    #[error("duplicate prediction key: {0}")]
    DuplicateKey(String),

    #[error("label {label} out of range for {num_classes} classes")]
    LabelOutOfRange { label: usize, num_classes: usize },

    #[error("connection error: {0}")]
    Connection(String),

    #[error("protocol error: {0}")]
    Protocol(String),

    #[error("timed out: {0}")]
    Timeout(String),

    #[error("shape mismatch: {0}")]
    ShapeMismatch(String),

    #[error("non-finite loss: {0}")]
    NonFiniteLoss(String),

    #[error("conditional robustness undefined: no anchor classified correctly ({0})")]
    UndefinedConditional(String),

    #[error("missing predictions for {} key(s): {}", .0.len(), preview(.0))]
    MissingPredictions(Vec<String>),

    #[error("wrong arity: expected {expected}, got {got}")]
    WrongArity { expected: usize, got: usize },

    #[error("length mismatch: {0} vs {1}")]
    LengthMismatch(usize, usize),

    #[error("degenerate variance: a series is constant")]
    DegenerateVariance,

    #[error("empty input: {0}")]
    EmptyInput(&'static str),

    #[error("invalid configuration: {0}")]
    Config(String),

    #[error(transparent)]
    Io(#[from] std::io::Error),
}

impl From<csv::Error> for Error {
    fn from(e: csv::Error) -> Self {
        Error::Io(e.into())
    }
}

fn preview(keys: &[String]) -> String {
    const SHOWN: usize = 5;
    let mut s = keys.iter().take(SHOWN).cloned().collect::<Vec<_>>().join(", ");
    if keys.len() > SHOWN {
        s.push_str(", ...");
    }
    s
}

impl Error {
    /// Stable identifier used in machine-readable error reports.
    pub fn code(&self) -> &'static str {
        match self {
            Error::DimensionMismatch(_) => "DimensionMismatch",
            Error::OutOfBounds(_) => "OutOfBounds",
            Error::InvalidSize(_) => "InvalidSize",
            Error::InvalidSeverity(_) => "InvalidSeverity",
            Error::MissingSeed(_) => "MissingSeed",
            Error::CodecFailure(_) => "CodecFailure",
            Error::Parse(_) => "ParseError",
            Error::SchemaViolation(_) => "SchemaViolation",
            Error::MissingFile(_) => "MissingFile",
            Error::InvalidOffset(_) => "InvalidOffset",
            Error::BadFractions(_) => "BadFractions",
            Error::DuplicateKey(_) => "DuplicateKey",
            Error::LabelOutOfRange { .. } => "LabelOutOfRange",
            Error::Connection(_) => "ConnectionError",
            Error::Protocol(_) => "ProtocolError",
            Error::Timeout(_) => "Timeout",
            Error::ShapeMismatch(_) => "ShapeMismatch",
            Error::NonFiniteLoss(_) => "NonFiniteLoss",
            Error::UndefinedConditional(_) => "UndefinedConditional",
            Error::MissingPredictions(_) => "MissingPredictions",
            Error::WrongArity { .. } => "WrongArity",
            Error::LengthMismatch(..) => "LengthMismatch",
            Error::DegenerateVariance => "DegenerateVariance",
            Error::EmptyInput(_) => "EmptyInput",
            Error::Config(_) => "InvalidConfig",
            Error::Io(_) => "IoError",
        }
    }

    /// Whether the error stems from invalid user input (as opposed to a runtime or data failure).
    pub fn is_validation(&self) -> bool {
        matches!(
            self,
            Error::InvalidSeverity(_)
                | Error::MissingSeed(_)
                | Error::InvalidOffset(_)
                | Error::BadFractions(_)
                | Error::InvalidSize(_)
                | Error::Config(_)
        )
    }
}
