use rcar::error::RcarError;

/// Process exit codes.
pub mod exit {
    pub const OK: i32 = 0;
    pub const IO: i32 = 1;
    pub const CONFIG: i32 = 2;
    pub const DATA: i32 = 3;
    pub const NUMERICAL: i32 = 4;
    pub const ACCEPTANCE: i32 = 5;
}

#[derive(Debug, thiserror::Error)]
pub enum CliError {
    #[error("{path}: {source}")]
    Io {
        path: String,
        #[source]
        source: std::io::Error,
    },
    #[error("config error: {0}")]
    Config(String),
    #[error("data error: {0}")]
    Data(String),
    #[error("numerical error: {0}")]
    Numerical(RcarError),
    #[error("acceptance failure: {0}")]
    Acceptance(String),
    #[error("{0}")]
    Other(String),
}

impl CliError {
    pub fn exit_code(&self) -> i32 {
        match self {
            CliError::Io { .. } | CliError::Other(_) => exit::IO,
            CliError::Config(_) => exit::CONFIG,
            CliError::Data(_) => exit::DATA,
            CliError::Numerical(_) => exit::NUMERICAL,
            CliError::Acceptance(_) => exit::ACCEPTANCE,
        }
    }

    pub(crate) fn io(path: &std::path::Path, source: std::io::Error) -> Self {
        CliError::Io {
            path: path.display().to_string(),
            source,
        }
    }

    /// Classifies a library error raised while validating or using configuration.
    pub(crate) fn from_model(e: RcarError) -> Self {
        match e.root() {
            RcarError::InvalidInput(_)
            | RcarError::DimensionMismatch(_)
            | RcarError::Precondition(_)
            | RcarError::RequiresSampling => CliError::Config(e.to_string()),
            _ => CliError::Numerical(e),
        }
    }

    /// Classifies a library error raised while processing a data file.
    pub(crate) fn from_data(e: RcarError) -> Self {
        match e.root() {
            RcarError::InvalidInput(_) | RcarError::DimensionMismatch(_) | RcarError::NonFinite(_) => {
                CliError::Data(e.to_string())
            }
            _ => CliError::Numerical(e),
        }
    }
}

pub type Result<T> = std::result::Result<T, CliError>;
