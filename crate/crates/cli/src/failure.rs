use std::fmt;
use std::path::Path;

use koopgait::Error;

#[derive(Debug)]
pub enum Failure {
    /// Bad flags or unusable inputs: exit code 2.
    Usage(String),
    /// Failures while computing: exit code 1.
    Runtime(String),
}

impl Failure {
    pub fn exit_code(&self) -> u8 {
        match self {
            Failure::Usage(_) => 2,
            Failure::Runtime(_) => 1,
        }
    }

    pub fn usage(msg: impl Into<String>) -> Self {
        Failure::Usage(msg.into())
    }

    pub fn runtime(msg: impl Into<String>) -> Self {
        Failure::Runtime(msg.into())
    }

    /// Classifies a library error raised while handling `path`.
    pub fn at(path: &Path, e: Error) -> Self {
        let f = Failure::from(e);
        match f {
            Failure::Usage(m) if !m.starts_with(&path.display().to_string()) => Failure::Usage(format!("{}: {m}", path.display())),
            Failure::Runtime(m) if !m.starts_with(&path.display().to_string()) => Failure::Runtime(format!("{}: {m}", path.display())),
            other => other,
        }
    }
}

impl From<Error> for Failure {
    fn from(e: Error) -> Self {
        match e {
            Error::InvalidArgument(_)
            | Error::Parse { .. }
            | Error::CorruptModel(_)
            | Error::ArchitectureMismatch { .. }
            | Error::Io { .. } => Failure::Usage(e.to_string()),
            _ => Failure::Runtime(e.to_string()),
        }
    }
}

impl fmt::Display for Failure {
    fn fmt(&self, f: &mut fmt::Formatter<'_>) -> fmt::Result {
        match self {
            Failure::Usage(m) | Failure::Runtime(m) => f.write_str(m),
        }
    }
}
