use thiserror::Error;

#[derive(Debug, Error)]
pub enum CliError {
    #[error("{0}")]
    Usage(String),
    #[error(transparent)]
    Core(#[from] sica_core::Error),
    #[error("io error: {0}")]
    Io(#[from] std::io::Error),
    #[error("json error: {0}")]
    Json(#[from] serde_json::Error),
}

pub type CliResult<T> = std::result::Result<T, CliError>;

impl CliError {
    /// 2 for numerical failures, 1 for everything else.
    pub fn exit_code(&self) -> i32 {
        match self {
            CliError::Core(e) if e.is_numerical() => 2,
            _ => 1,
        }
    }

    pub fn kind(&self) -> &'static str {
        use sica_core::Error as E;
        match self {
            CliError::Usage(_) => "usage",
            CliError::Core(E::Numerical(_)) => "numerical",
            CliError::Core(E::Dimension(_)) => "dimension",
            CliError::Core(E::InvalidInput(_)) => "invalid_input",
            CliError::Core(E::Undefined(_)) => "undefined",
            CliError::Core(E::Format(_) | E::Json(_) | E::Csv(_)) => "format",
            CliError::Core(E::Io(_)) | CliError::Io(_) => "io",
            CliError::Json(_) => "format",
        }
    }
}

pub fn usage<T>(msg: impl Into<String>) -> CliResult<T> {
    Err(CliError::Usage(msg.into()))
}
