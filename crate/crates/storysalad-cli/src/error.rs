//! Process-level errors carrying the exit code they map to: 2 for bad
//! input or usage, 3 for numerical failures during computation.

#[derive(Debug, thiserror::Error)]
pub enum CliError {
    #[error("{0}")]
    Input(String),
    #[error("{0}")]
    Numeric(String),
}

impl CliError {
    pub fn exit_code(&self) -> i32 {
        match self {
            CliError::Input(_) => 2,
            CliError::Numeric(_) => 3,
        }
    }
}

pub type Result<T> = std::result::Result<T, CliError>;

pub fn input(e: impl std::fmt::Display) -> CliError {
    CliError::Input(e.to_string())
}

pub fn numeric(e: impl std::fmt::Display) -> CliError {
    CliError::Numeric(e.to_string())
}

/// A flag that is required but was given neither on the command line nor in
/// the config file.
pub fn missing(flag: &str) -> CliError {
    CliError::Input(format!("missing required {flag}"))
}
