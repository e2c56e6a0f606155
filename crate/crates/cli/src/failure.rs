use std::fmt;
use std::path::Path;

/// A command failure, split by exit code: bad input content exits 1, I/O
/// trouble exits 2.
#[derive(Debug)]
pub enum Failure {
    Invalid(String),
    Io(String),
}

impl Failure {
    pub fn exit_code(&self) -> u8 {
        match self {
            Failure::Invalid(_) => 1,
            Failure::Io(_) => 2,
        }
    }

    pub fn invalid(msg: impl Into<String>) -> Self {
        Failure::Invalid(msg.into())
    }

    /// Wraps a library error raised while handling `path`.
    pub fn core(path: &Path, err: party_eval_core::Error) -> Self {
        let msg = format!("{}: {err}", path.display());
        if err.is_validation() {
            Failure::Invalid(msg)
        } else {
            Failure::Io(msg)
        }
    }

    pub fn io(path: &Path, err: std::io::Error) -> Self {
        Failure::Io(format!("{}: {err}", path.display()))
    }

    pub fn is_invalid(&self) -> bool {
        matches!(self, Failure::Invalid(_))
    }
}

impl fmt::Display for Failure {
    fn fmt(&self, f: &mut fmt::Formatter<'_>) -> fmt::Result {
        match self {
            Failure::Invalid(m) => write!(f, "invalid input: {m}"),
            Failure::Io(m) => write!(f, "i/o error: {m}"),
        }
    }
}
