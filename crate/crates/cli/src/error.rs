use std::process::ExitCode;

use ctbound::Error;
use ctbound_tensor::TensorError;

#[derive(Debug, thiserror::Error)]
pub enum CliError {
    #[error("configuration error: {0}")]
    Config(String),
    #[error("input error: {0}")]
    Input(String),
    #[error("numeric failure: {0}")]
    Numeric(String),
}

impl CliError {
    pub fn exit_code(&self) -> ExitCode {
        ExitCode::from(match self {
            CliError::Config(_) => 2,
            CliError::Input(_) => 3,
            CliError::Numeric(_) => 4,
        })
    }

    pub fn io(path: &std::path::Path, e: std::io::Error) -> Self {
        CliError::Input(format!("{}: {e}", path.display()))
    }
}

impl From<Error> for CliError {
    fn from(e: Error) -> Self {
        let msg = e.to_string();
        match e {
            Error::Config(_) | Error::InvalidParameter(_) => CliError::Config(msg),
            Error::InvalidInput(_) | Error::Io { .. } | Error::Decode { .. } => CliError::Input(msg),
            Error::Numeric(_) => CliError::Numeric(msg),
            Error::Tensor(t) => t.into(),
        }
    }
}

impl From<TensorError> for CliError {
    fn from(e: TensorError) -> Self {
        let msg = e.to_string();
        match e {
            TensorError::NonFiniteGradient { .. } => CliError::Numeric(msg),
            TensorError::Config(_) => CliError::Config(msg),
            TensorError::Shape { .. } | TensorError::Checkpoint(_) | TensorError::Io(_) => CliError::Input(msg),
        }
    }
}
