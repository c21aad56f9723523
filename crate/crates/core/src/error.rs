use std::path::PathBuf;

use thiserror::Error;

pub type Result<T, E = Error> = std::result::Result<T, E>;

#[derive(Debug, Error)]
pub enum Error {
    #[error("i/o error on {path}: {source}")]
    Io {
        path: PathBuf,
        #[source]
        source: std::io::Error,
    },

    #[error("parse error at {location}: {message}")]
    Parse { location: String, message: String },

    #[error("validation error: {0}")]
    Validation(String),

    #[error("invalid input: {0}")]
    InvalidInput(String),

    #[error("transport error after {attempts} attempt(s): {message}")]
    Transport { attempts: u32, message: String },

    #[error("backend `{backend}` returned an empty completion")]
    EmptyOutput { backend: String },

    #[error("backend `{backend}` does not support {capability}")]
    Capability {
        backend: String,
        capability: &'static str,
    },

    #[error("generation error: {0}")]
    Generation(String),

    #[error("could not parse alignment output: {reason}")]
    AlignmentParse { reason: String, raw: String },

    #[error("missing upstream artifact {}: {hint}", path.display())]
    Dependency { path: PathBuf, hint: String },

    #[error("configuration error: {0}")]
    Config(String),

    #[error("case {case_id}: {source}")]
    InCase {
        case_id: String,
        #[source]
        source: Box<Error>,
    },
}

/// Coarse error class, used for process exit codes.
#[derive(Debug, Clone, Copy, PartialEq, Eq)]
pub enum ErrorClass {
    Config,
    Input,
    Backend,
    Dependency,
    Io,
}

impl ErrorClass {
    pub fn exit_code(self) -> i32 {
        match self {
            ErrorClass::Io => 1,
            ErrorClass::Config => 2,
            ErrorClass::Input => 3,
            ErrorClass::Backend => 4,
            ErrorClass::Dependency => 5,
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

    pub fn parse(location: impl Into<String>, message: impl ToString) -> Self {
        Error::Parse {
            location: location.into(),
            message: message.to_string(),
        }
    }

    pub fn in_case(self, case_id: &str) -> Self {
        match self {
            e @ Error::InCase { .. } => e,
            other => Error::InCase {
                case_id: case_id.to_string(),
                source: Box::new(other),
            },
        }
    }

    pub fn class(&self) -> ErrorClass {
        match self {
            Error::Io { .. } => ErrorClass::Io,
            Error::Config(_) => ErrorClass::Config,
            Error::Parse { .. }
            | Error::Validation(_)
            | Error::InvalidInput(_)
            | Error::AlignmentParse { .. } => ErrorClass::Input,
            Error::Transport { .. }
            | Error::EmptyOutput { .. }
            | Error::Capability { .. }
            | Error::Generation(_) => ErrorClass::Backend,
            Error::Dependency { .. } => ErrorClass::Dependency,
            Error::InCase { source, .. } => source.class(),
        }
    }
}
