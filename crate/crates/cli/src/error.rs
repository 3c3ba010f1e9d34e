use thiserror::Error;

/// Command failures, bucketed by the exit-code contract:
/// 0 success, 1 verification failure, 2 configuration/input error,
/// 3 numerical abort.
#[derive(Debug, Error)]
pub enum CliError {
    #[error("{0}")]
    Config(String),
    #[error("{0}")]
    Verification(String),
    #[error("{0}")]
    Numerical(String),
}

impl CliError {
    pub fn exit_code(&self) -> i32 {
        match self {
            CliError::Verification(_) => 1,
            CliError::Config(_) => 2,
            CliError::Numerical(_) => 3,
        }
    }
}

impl From<sceneenc::data::DataError> for CliError {
    fn from(e: sceneenc::data::DataError) -> Self {
        CliError::Config(e.to_string())
    }
}

impl From<sceneenc::trainer::TrainError> for CliError {
    fn from(e: sceneenc::trainer::TrainError) -> Self {
        match e {
            sceneenc::trainer::TrainError::NonFiniteLoss { .. } => CliError::Numerical(e.to_string()),
            other => CliError::Config(other.to_string()),
        }
    }
}

impl From<sceneenc::trainer::CheckpointError> for CliError {
    fn from(e: sceneenc::trainer::CheckpointError) -> Self {
        CliError::Config(e.to_string())
    }
}

impl From<std::io::Error> for CliError {
    fn from(e: std::io::Error) -> Self {
        CliError::Config(e.to_string())
    }
}

impl From<serde_json::Error> for CliError {
    fn from(e: serde_json::Error) -> Self {
        CliError::Config(e.to_string())
    }
}
