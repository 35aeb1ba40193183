use std::process::ExitCode;

/// Command failure, classified by exit code.
#[derive(Debug, thiserror::Error)]
pub enum CliError {
    /// Bad configuration, arguments or inputs: exit 2.
    #[error("{0}")]
    Input(String),
    /// Training diverged or a numerical self-check failed: exit 3.
    #[error("{0}")]
    Numerical(String),
}

impl CliError {
    pub fn exit_code(&self) -> ExitCode {
        match self {
            CliError::Input(_) => ExitCode::from(2),
            CliError::Numerical(_) => ExitCode::from(3),
        }
    }
}

impl From<ctxdepth::Error> for CliError {
    fn from(e: ctxdepth::Error) -> Self {
        match e {
            ctxdepth::Error::NonFiniteLoss { .. } => CliError::Numerical(e.to_string()),
            other => CliError::Input(other.to_string()),
        }
    }
}

pub type CliResult<T> = Result<T, CliError>;

pub fn input(msg: impl Into<String>) -> CliError {
    CliError::Input(msg.into())
}
