use thiserror::Error;

/// Command failure, mapped onto the process exit code.
#[derive(Debug, Error)]
pub enum CliError {
    #[error("config error: {0}")]
    Config(String),
    #[error("data error: {0}")]
    Data(String),
    #[error("training error: {0}")]
    Training(String),
    #[error("unknown match: {0}")]
    UnknownMatch(String),
    #[error("missing model: {0}")]
    MissingModel(String),
    #[error("i/o error: {0}")]
    Io(#[from] std::io::Error),
}

impl CliError {
    pub fn exit_code(&self) -> i32 {
        match self {
            CliError::Config(_) => 2,
            CliError::Data(_) | CliError::Io(_) => 3,
            CliError::Training(_) => 4,
            CliError::UnknownMatch(_) | CliError::MissingModel(_) => 5,
        }
    }
}

impl From<volleyxai::data::DataError> for CliError {
    fn from(e: volleyxai::data::DataError) -> Self {
        match e {
            volleyxai::data::DataError::InvalidConfig(msg) => CliError::Config(msg),
            other => CliError::Data(other.to_string()),
        }
    }
}

impl From<volleyxai::features::FeatureError> for CliError {
    fn from(e: volleyxai::features::FeatureError) -> Self {
        CliError::Data(e.to_string())
    }
}

impl From<volleyxai::models::ModelError> for CliError {
    fn from(e: volleyxai::models::ModelError) -> Self {
        CliError::Training(e.to_string())
    }
}
