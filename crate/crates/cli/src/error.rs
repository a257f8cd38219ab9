use sparsevar::VarError;

/// Failure classes with stable exit codes.
#[derive(Debug, thiserror::Error)]
pub enum CliError {
    #[error("config error: {0}")]
    Config(String),
    #[error("data error: {0}")]
    Data(String),
    #[error("numerical error: {0}")]
    Numeric(String),
    #[error("internal error: {0}")]
    Internal(String),
}

impl CliError {
    pub fn exit_code(&self) -> i32 {
        match self {
            CliError::Config(_) => 2,
            CliError::Data(_) => 3,
            CliError::Numeric(_) => 4,
            CliError::Internal(_) => 5,
        }
    }

    pub fn read(path: &std::path::Path, err: std::io::Error) -> Self {
        CliError::Data(format!("cannot read {}: {err}", path.display()))
    }

    pub fn write(path: &std::path::Path, err: std::io::Error) -> Self {
        CliError::Internal(format!("cannot write {}: {err}", path.display()))
    }
}

impl From<VarError> for CliError {
    fn from(e: VarError) -> Self {
        let msg = e.to_string();
        match e {
            VarError::InvalidArgument(_) => CliError::Config(msg),
            VarError::Parse(_) | VarError::Dimension(_) | VarError::InsufficientData { .. } => {
                CliError::Data(msg)
            }
            VarError::Internal(_) => CliError::Internal(msg),
            _ => CliError::Numeric(msg),
        }
    }
}
