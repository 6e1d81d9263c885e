//! Front-end error type with stable machine-readable codes, printed as
//! `ERROR <code>: <message>` lines by the binary.

use std::fmt;

#[derive(Debug)]
pub enum CliError {
    Parse { line: usize, msg: String },
    UnknownKey { line: usize, key: String },
    DimensionMismatch { expected: usize, got: usize },
    Io(String),
    Usage(String),
    Core(orbiflow_core::Error),
}

impl CliError {
    pub fn code(&self) -> &'static str {
        match self {
            CliError::Parse { .. } => "parse",
            CliError::UnknownKey { .. } => "unknown-key",
            CliError::DimensionMismatch { .. } => "dimension-mismatch",
            CliError::Io(_) => "io",
            CliError::Usage(_) => "usage",
            CliError::Core(e) => e.code(),
        }
    }

    /// CLI exit status for this error.
    pub fn exit_code(&self) -> i32 {
        match self {
            CliError::Usage(_) => 2,
            _ => 1,
        }
    }
}

impl fmt::Display for CliError {
    fn fmt(&self, f: &mut fmt::Formatter<'_>) -> fmt::Result {
        match self {
            CliError::Parse { line, msg } if *line > 0 => write!(f, "line {line}: {msg}"),
            CliError::Parse { msg, .. } => write!(f, "{msg}"),
            CliError::UnknownKey { line, key } => write!(f, "line {line}: unknown key {key}"),
            CliError::DimensionMismatch { expected, got } => write!(
                f,
                "monitors.n = {got} does not match the hypersurface dimension {expected} \
                 implied by the geometry"
            ),
            CliError::Io(msg) => write!(f, "{msg}"),
            CliError::Usage(msg) => write!(f, "{msg}"),
            CliError::Core(e) => write!(f, "{e}"),
        }
    }
}

impl std::error::Error for CliError {}

impl From<orbiflow_core::Error> for CliError {
    fn from(e: orbiflow_core::Error) -> Self {
        CliError::Core(e)
    }
}

impl From<std::io::Error> for CliError {
    fn from(e: std::io::Error) -> Self {
        CliError::Io(e.to_string())
    }
}

pub type Result<T> = std::result::Result<T, CliError>;
