use thiserror::Error;

/// Errors raised anywhere in the kriging pipeline.
#[derive(Debug, Error)]
pub enum KitsError {
    #[error("dimension error: {0}")]
    Dimension(String),
    #[error("index error: {0}")]
    Index(String),
    #[error("contract error: {0}")]
    Contract(String),
    #[error("data error: {0}")]
    Data(String),
    #[error("config error: {0}")]
    Config(String),
    #[error("numerical error: {0}")]
    Numerical(String),
    #[error("evaluation error: {0}")]
    Evaluation(String),
    #[error("training error: {0}")]
    Training(String),
    #[error("io error: {0}")]
    Io(#[from] std::io::Error),
    #[error("json error: {0}")]
    Json(#[from] serde_json::Error),
}

impl KitsError {
    /// Process exit code used by the command-line front end.
    pub fn exit_code(&self) -> i32 {
        match self {
            KitsError::Config(_) | KitsError::Contract(_) | KitsError::Json(_) => 1,
            KitsError::Data(_) | KitsError::Io(_) | KitsError::Index(_) | KitsError::Dimension(_) => 2,
            KitsError::Numerical(_) | KitsError::Evaluation(_) | KitsError::Training(_) => 3,
        }
    }
}

pub type Result<T> = std::result::Result<T, KitsError>;
