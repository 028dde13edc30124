use dphd::ErrorKind;
use thiserror::Error;

#[derive(Debug, Error)]
pub enum CliError {
    #[error("{0}")]
    Config(String),

    #[error("{0}")]
    Data(String),

    #[error(transparent)]
    Core(#[from] dphd::Error),
}

impl CliError {
    pub fn kind(&self) -> &'static str {
        match self {
            CliError::Config(_) => "config",
            CliError::Data(_) => "data",
            CliError::Core(e) => match e.kind() {
                ErrorKind::Config => "config",
                ErrorKind::Data => "data",
                ErrorKind::Numeric => "numeric",
            },
        }
    }

    pub fn exit_code(&self) -> i32 {
        match self.kind() {
            "config" => 2,
            "data" => 3,
            _ => 4,
        }
    }
}
