use mta_core::experiment::ExperimentError;
use mta_core::nn::NnError;
use mta_core::scm::ScmError;

/// Failure classes, each with its own process exit code.
#[derive(Debug, thiserror::Error)]
pub enum CliError {
    #[error("config: {0}")]
    Config(String),
    #[error("data: {0}")]
    Data(String),
    #[error("training: {0}")]
    Train(String),
    #[error("evaluation: {0}")]
    Eval(String),
    #[error("hash mismatch: {0} (pass --force to override)")]
    Mismatch(String),
    #[error("io: {0}")]
    Io(#[from] std::io::Error),
}

impl CliError {
    pub fn exit_code(&self) -> u8 {
        match self {
            CliError::Io(_) => 1,
            CliError::Config(_) => 2,
            CliError::Data(_) => 3,
            CliError::Train(_) => 4,
            CliError::Eval(_) => 5,
            CliError::Mismatch(_) => 6,
        }
    }
}

impl From<ExperimentError> for CliError {
    fn from(e: ExperimentError) -> Self {
        let msg = e.to_string();
        match e {
            ExperimentError::Config { .. } => CliError::Config(msg),
            ExperimentError::Data(_) | ExperimentError::Scm(_) => CliError::Data(msg),
            ExperimentError::Train(_) | ExperimentError::Nn(_) => CliError::Train(msg),
            ExperimentError::Eval(_)
            | ExperimentError::Estimator(_)
            | ExperimentError::Metric(_)
            | ExperimentError::Baseline(_) => CliError::Eval(msg),
        }
    }
}

impl From<ScmError> for CliError {
    fn from(e: ScmError) -> Self {
        match e {
            ScmError::Config { .. } => CliError::Config(e.to_string()),
            ScmError::Io(io) => CliError::Io(io),
            _ => CliError::Data(e.to_string()),
        }
    }
}

impl From<NnError> for CliError {
    fn from(e: NnError) -> Self {
        CliError::Train(e.to_string())
    }
}
