use std::fmt;

/// Errors produced anywhere in the pipeline.
#[derive(Debug, thiserror::Error)]
pub enum Error {
    #[error("parse error at byte {offset}: {message}")]
    Parse { offset: usize, message: String },

    #[error("schema error: {0}")]
    Schema(String),

    #[error("domain error: {0}")]
    Domain(String),

    #[error("invalid input: {0}")]
    Input(String),

    #[error("shape error: {0}")]
    Shape(String),

    #[error("decode error at {position}: {message}")]
    Decode { position: usize, message: String },

    #[error(transparent)]
    Io(#[from] std::io::Error),
}

/// Coarse error class, used for process exit codes.
#[derive(Debug, Clone, Copy, PartialEq, Eq)]
pub enum ErrorCategory {
    Parse,
    Domain,
    Io,
}

impl ErrorCategory {
    pub fn exit_code(self) -> i32 {
        match self {
            ErrorCategory::Parse => 2,
            ErrorCategory::Domain => 3,
            ErrorCategory::Io => 4,
        }
    }
}

impl fmt::Display for ErrorCategory {
    fn fmt(&self, f: &mut fmt::Formatter<'_>) -> fmt::Result {
        let name = match self {
            ErrorCategory::Parse => "parse",
            ErrorCategory::Domain => "domain",
            ErrorCategory::Io => "io",
        };
        f.write_str(name)
    }
}

impl Error {
    pub(crate) fn parse(offset: usize, message: impl Into<String>) -> Self {
        Error::Parse {
            offset,
            message: message.into(),
        }
    }

    pub(crate) fn decode(position: usize, message: impl Into<String>) -> Self {
        Error::Decode {
            position,
            message: message.into(),
        }
    }

    pub fn category(&self) -> ErrorCategory {
        match self {
            Error::Parse { .. } | Error::Schema(_) | Error::Decode { .. } => ErrorCategory::Parse,
            Error::Domain(_) | Error::Input(_) | Error::Shape(_) => ErrorCategory::Domain,
            Error::Io(_) => ErrorCategory::Io,
        }
    }
}

pub type Result<T, E = Error> = std::result::Result<T, E>;
