use thiserror::Error;

/// Command failures, grouped by exit status.
#[derive(Debug, Error)]
pub enum CliError {
    /// Bad flags, config values or missing inputs (exit 2).
    #[error("usage: {0}")]
    Usage(String),
    /// An input file exists but could not be read or failed validation (exit 2).
    #[error("{0}")]
    Input(String),
    /// Inputs are individually valid but the computation is undefined (exit 1).
    #[error("{0}")]
    Data(String),
    /// A verification command ran and its check failed (exit 1).
    #[error("check failed: {0}")]
    CheckFailed(String),
}

impl CliError {
    pub fn exit_code(&self) -> i32 {
        match self {
            CliError::Usage(_) | CliError::Input(_) => 2,
            CliError::Data(_) | CliError::CheckFailed(_) => 1,
        }
    }
}

impl From<tinypatch::ingest::IngestError> for CliError {
    fn from(e: tinypatch::ingest::IngestError) -> Self {
        CliError::Input(e.to_string())
    }
}

impl From<tinypatch::pipeline_sim::TraceError> for CliError {
    fn from(e: tinypatch::pipeline_sim::TraceError) -> Self {
        CliError::Input(e.to_string())
    }
}

impl From<tinypatch::pipeline_sim::SimError> for CliError {
    fn from(e: tinypatch::pipeline_sim::SimError) -> Self {
        CliError::Usage(e.to_string())
    }
}

impl From<tinypatch::coverage::CoverageError> for CliError {
    fn from(e: tinypatch::coverage::CoverageError) -> Self {
        use tinypatch::coverage::CoverageError;
        match e {
            CoverageError::MissingMap(_) => CliError::Input(e.to_string()),
            _ => CliError::Data(e.to_string()),
        }
    }
}

impl From<tinypatch::qos::QosError> for CliError {
    fn from(e: tinypatch::qos::QosError) -> Self {
        CliError::Data(e.to_string())
    }
}

impl From<tinypatch::response_map::MapError> for CliError {
    fn from(e: tinypatch::response_map::MapError) -> Self {
        CliError::Usage(e.to_string())
    }
}

impl From<tinypatch::supervision::LossError> for CliError {
    fn from(e: tinypatch::supervision::LossError) -> Self {
        CliError::Usage(e.to_string())
    }
}

pub(crate) fn io_err(path: &std::path::Path, e: std::io::Error) -> CliError {
    CliError::Input(format!("{}: {e}", path.display()))
}
