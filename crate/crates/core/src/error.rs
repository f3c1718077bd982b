use std::fmt;

/// Errors produced by every stage of the scoring pipeline.
#[derive(Debug, thiserror::Error)]
pub enum Error {
    /// Input text could not be decoded; `at` locates the offending line or field.
    #[error("parse error at {at}: {message}")]
    Parse { at: Locator, message: String },

    /// Input decoded but violates a domain invariant.
    #[error("validation error: {0}")]
    Validation(String),

    /// A caller-supplied parameter is out of range.
    #[error("invalid argument: {0}")]
    Argument(String),

    /// A referenced id (host, endpoint, node, vulnerability) does not exist.
    #[error("unknown {what} `{id}`")]
    Unknown { what: &'static str, id: String },
}

impl Error {
    pub(crate) fn parse(at: Locator, message: impl Into<String>) -> Self {
        Error::Parse {
            at,
            message: message.into(),
        }
    }

    pub(crate) fn unknown(what: &'static str, id: impl Into<String>) -> Self {
        Error::Unknown {
            what,
            id: id.into(),
        }
    }
}

/// Position of a parse failure.
#[derive(Debug, Clone, PartialEq, Eq)]
pub enum Locator {
    Line(u64),
    LineField(u64, String),
    /// Byte-less JSON location (serde_json reports line/column).
    LineColumn(usize, usize),
    Record(usize),
    RecordField(usize, String),
}

impl fmt::Display for Locator {
    fn fmt(&self, f: &mut fmt::Formatter<'_>) -> fmt::Result {
        match self {
            Locator::Line(l) => write!(f, "line {l}"),
            Locator::LineField(l, field) => write!(f, "line {l}, field `{field}`"),
            Locator::LineColumn(l, c) => write!(f, "line {l}, column {c}"),
            Locator::Record(i) => write!(f, "record {i}"),
            Locator::RecordField(i, field) => write!(f, "record {i}, field `{field}`"),
        }
    }
}

impl From<serde_json::Error> for Error {
    fn from(e: serde_json::Error) -> Self {
        Error::parse(Locator::LineColumn(e.line(), e.column()), e.to_string())
    }
}

pub type Result<T, E = Error> = std::result::Result<T, E>;
