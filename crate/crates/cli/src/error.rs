use thiserror::Error;

/// Failures of a run, each mapped to its own exit status.
#[derive(Debug, Error)]
pub enum CliError {
    #[error("usage: {0}")]
    Usage(String),

    #[error("cannot read config: {0}")]
    ConfigPath(String),

    #[error("config schema violation: {0}")]
    Schema(String),

    #[error("numerical failure: {0}")]
    Numerical(qelab::Error),

    #[error("output error: {0}")]
    Output(String),
}

impl CliError {
    pub fn exit_code(&self) -> u8 {
        match self {
            CliError::Usage(_) => 2,
            CliError::ConfigPath(_) => 3,
            CliError::Schema(_) => 4,
            CliError::Numerical(_) => 5,
            CliError::Output(_) => 6,
        }
    }
}

impl From<qelab::Error> for CliError {
    fn from(e: qelab::Error) -> Self {
        match e {
            qelab::Error::Config(m) => CliError::Schema(m),
            qelab::Error::Io(_) | qelab::Error::Csv(_) | qelab::Error::Json(_) => CliError::Output(e.to_string()),
            other => CliError::Numerical(other),
        }
    }
}

impl From<std::io::Error> for CliError {
    fn from(e: std::io::Error) -> Self {
        CliError::Output(e.to_string())
    }
}

impl From<csv::Error> for CliError {
    fn from(e: csv::Error) -> Self {
        CliError::Output(e.to_string())
    }
}

impl From<serde_json::Error> for CliError {
    fn from(e: serde_json::Error) -> Self {
        CliError::Output(e.to_string())
    }
}
