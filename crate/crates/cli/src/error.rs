use crate::formats::FormatError;

/// Failure of a subcommand, classified by exit status.
#[derive(Debug, thiserror::Error)]
pub enum CliError {
    /// Bad invocation: unknown flag, missing path.
    #[error("usage error: {0}")]
    Usage(String),
    /// Inputs or settings that violate a contract.
    #[error("validation error: {0}")]
    Validation(String),
    /// The environment failed: unreadable input, unwritable output.
    #[error("runtime error: {0}")]
    Runtime(String),
}

impl CliError {
    pub const USAGE: u8 = 2;
    pub const VALIDATION: u8 = 3;
    pub const RUNTIME: u8 = 1;

    pub fn exit_code(&self) -> u8 {
        match self {
            CliError::Usage(_) => Self::USAGE,
            CliError::Validation(_) => Self::VALIDATION,
            CliError::Runtime(_) => Self::RUNTIME,
        }
    }
}

impl From<FormatError> for CliError {
    fn from(e: FormatError) -> Self {
        if e.is_io() {
            CliError::Runtime(e.to_string())
        } else {
            CliError::Validation(e.to_string())
        }
    }
}

impl From<dualcal_core::Error> for CliError {
    fn from(e: dualcal_core::Error) -> Self {
        CliError::Validation(e.to_string())
    }
}
