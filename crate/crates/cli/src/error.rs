//! CLI error type with the process exit code mapping: 0 success, 2 usage,
//! 3 non-convergence, 4 numerical failure.

#[derive(Debug, thiserror::Error)]
pub enum CliError {
    #[error("{0}")]
    Usage(String),
    #[error("solver did not converge: {0}")]
    NonConvergence(String),
    #[error("numerical failure: {0}")]
    Numerical(String),
}

impl CliError {
    pub fn code(&self) -> u8 {
        match self {
            CliError::Usage(_) => 2,
            CliError::NonConvergence(_) => 3,
            CliError::Numerical(_) => 4,
        }
    }
}

impl From<gbcd::Error> for CliError {
    fn from(e: gbcd::Error) -> Self {
        use gbcd::Error::*;
        match e {
            NotConverged { .. } => CliError::NonConvergence(e.to_string()),
            NumericalBreakdown { .. } | FactorizationFailed => CliError::Numerical(e.to_string()),
            _ => CliError::Usage(e.to_string()),
        }
    }
}

impl From<std::io::Error> for CliError {
    fn from(e: std::io::Error) -> Self {
        CliError::Usage(format!("io error: {e}"))
    }
}

pub type CliResult<T> = std::result::Result<T, CliError>;
