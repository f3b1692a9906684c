use std::fmt;

/// Failure of a subcommand, split by exit code.
#[derive(Debug)]
pub enum CliError {
    /// Bad flags, config file problems, missing required options.
    Usage(String),
    /// Unreadable or malformed input data and library errors.
    Data(String),
}

impl CliError {
    pub fn exit_code(&self) -> i32 {
        match self {
            CliError::Usage(_) => 1,
            CliError::Data(_) => 2,
        }
    }
}

impl fmt::Display for CliError {
    fn fmt(&self, f: &mut fmt::Formatter<'_>) -> fmt::Result {
        match self {
            CliError::Usage(m) => write!(f, "usage error: {m}"),
            CliError::Data(m) => write!(f, "error: {m}"),
        }
    }
}

impl From<clustseg_core::Error> for CliError {
    fn from(e: clustseg_core::Error) -> Self {
        CliError::Data(e.to_string())
    }
}

pub type CliResult<T> = Result<T, CliError>;

pub fn usage(msg: impl Into<String>) -> CliError {
    CliError::Usage(msg.into())
}

pub fn data(msg: impl Into<String>) -> CliError {
    CliError::Data(msg.into())
}
