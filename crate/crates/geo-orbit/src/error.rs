use std::fmt;
use std::path::Path;

/// Failure of a command, split by who is at fault.
#[derive(Debug)]
pub enum CliError {
    /// Missing or malformed input: exit code 2.
    BadInput(String),
    /// Anything else: exit code 1.
    Internal(String),
}

impl CliError {
    pub fn exit_code(&self) -> i32 {
        match self {
            CliError::BadInput(_) => 2,
            CliError::Internal(_) => 1,
        }
    }

    pub fn bad_input(msg: impl Into<String>) -> Self {
        CliError::BadInput(msg.into())
    }

    pub fn internal(msg: impl Into<String>) -> Self {
        CliError::Internal(msg.into())
    }

    /// Reading `path` failed; a missing or unreadable file is bad input.
    pub fn read(path: &Path, err: impl fmt::Display) -> Self {
        CliError::BadInput(format!("cannot read {}: {err}", path.display()))
    }

    pub fn parse(path: &Path, err: impl fmt::Display) -> Self {
        CliError::BadInput(format!("{}: {err}", path.display()))
    }

    pub fn write(path: &Path, err: impl fmt::Display) -> Self {
        CliError::Internal(format!("cannot write {}: {err}", path.display()))
    }
}

impl fmt::Display for CliError {
    fn fmt(&self, f: &mut fmt::Formatter<'_>) -> fmt::Result {
        match self {
            CliError::BadInput(m) => write!(f, "bad input: {m}"),
            CliError::Internal(m) => write!(f, "internal error: {m}"),
        }
    }
}

impl std::error::Error for CliError {}

/// Core errors stem from the data handed to the library, so they count as
/// bad input.
impl From<geo_orbit_core::Error> for CliError {
    fn from(e: geo_orbit_core::Error) -> Self {
        CliError::BadInput(e.to_string())
    }
}

pub type CliResult<T> = Result<T, CliError>;
