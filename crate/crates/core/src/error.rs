use std::path::PathBuf;

use crate::runtime::{Datatype, ReduceOp};

pub type Result<T, E = Error> = std::result::Result<T, E>;

#[derive(Debug, thiserror::Error)]
pub enum Error {
    #[error("rank {rank} is not a member of a group of size {size}")]
    UnknownRank { rank: usize, size: usize },

    #[error("rank {0} attempted to send a message to itself")]
    SelfSend(usize),

    #[error("deadlock: every live rank is blocked waiting for a message")]
    Deadlock,

    #[error("rank {rank} panicked: {message}")]
    RankPanic { rank: usize, message: String },

    #[error("group size must be at least 1")]
    EmptyGroup,

    #[error("reduction {op} is not defined on {datatype}")]
    OpDatatypeMismatch { op: ReduceOp, datatype: Datatype },

    #[error("{what}: expected {expected} bytes, got {actual}")]
    SizeMismatch {
        what: &'static str,
        expected: usize,
        actual: usize,
    },

    #[error("root {root} is out of range for a group of size {size}")]
    RootOutOfRange { root: usize, size: usize },

    #[error("invalid collective call: {0}")]
    InvalidCall(String),

    #[error("{mockup} replaces {expected}, not {actual}")]
    KindMismatch {
        mockup: &'static str,
        expected: &'static str,
        actual: &'static str,
    },

    #[error("{arena} arena too small: {needed} bytes needed, {capacity} available")]
    InsufficientScratch {
        arena: &'static str,
        needed: usize,
        capacity: usize,
    },

    #[error("degenerate sample set: {0}")]
    DegenerateSamples(&'static str),

    #[error("relative standard error did not converge within {cap} observations")]
    NonConvergence { cap: usize },

    #[error("empty input: {0}")]
    EmptyInput(&'static str),

    #[error("no Default measurements for {collective} at {msize} bytes")]
    MissingDefault { collective: String, msize: u64 },

    #[error("{}line {line}: {message}", .file.as_ref().map(|f| format!("{}: ", f.display())).unwrap_or_default())]
    Parse {
        file: Option<PathBuf>,
        line: usize,
        message: String,
    },

    #[error("profile invariant violated: {0}")]
    InvariantViolation(String),

    #[error("unknown collective `{0}`")]
    UnknownCollective(String),

    #[error("unknown mock-up `{name}`; valid names: {valid}")]
    UnknownMockup { name: String, valid: String },

    #[error("configuration error: {0}")]
    Config(String),

    #[error("no Default reference for {0}")]
    KeyMismatch(String),

    #[error(transparent)]
    Io(#[from] std::io::Error),

    #[error(transparent)]
    Csv(#[from] csv::Error),
}

impl Error {
    pub(crate) fn parse(line: usize, message: impl Into<String>) -> Self {
        Error::Parse {
            file: None,
            line,
            message: message.into(),
        }
    }

    /// Attaches a file name to a parse error.
    pub(crate) fn in_file(self, path: &std::path::Path) -> Self {
        match self {
            Error::Parse { line, message, .. } => Error::Parse {
                file: Some(path.to_path_buf()),
                line,
                message,
            },
            other => other,
        }
    }

    /// True for errors caused by the user's configuration or command line.
    pub fn is_config_error(&self) -> bool {
        matches!(
            self,
            Error::Config(_) | Error::UnknownCollective(_) | Error::UnknownMockup { .. }
        )
    }
}
