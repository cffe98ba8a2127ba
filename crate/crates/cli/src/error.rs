use thiserror::Error;

/// Exit status for usage, parse and I/O failures.
pub const EXIT_USAGE: i32 = 1;
/// Exit status for numerical failures: non-convergence, grid mismatch,
/// integrator breakdown.
pub const EXIT_NUMERICAL: i32 = 2;

#[derive(Debug, Error)]
pub enum CliError {
    #[error("usage error: {0}")]
    Usage(String),
    #[error("i/o error: {0}")]
    Io(String),
    #[error("parse error: {0}")]
    Parse(String),
    #[error("numerical failure: {0}")]
    Numerical(String),
}

impl CliError {
    pub fn exit_code(&self) -> i32 {
        match self {
            CliError::Usage(_) | CliError::Io(_) | CliError::Parse(_) => EXIT_USAGE,
            CliError::Numerical(_) => EXIT_NUMERICAL,
        }
    }
}

impl From<nhbloch::Error> for CliError {
    fn from(e: nhbloch::Error) -> Self {
        use nhbloch::Error as E;
        match e {
            E::GridMismatch(_)
            | E::DegenerateJacobian(_)
            | E::StepUnderflow { .. }
            | E::IntegrationDefect { .. }
            | E::ZeroNorm { .. } => CliError::Numerical(e.to_string()),
            E::InvalidSeries(_) | E::TooFewInputs { .. } => CliError::Parse(e.to_string()),
            _ => CliError::Usage(e.to_string()),
        }
    }
}

pub type CliResult<T> = Result<T, CliError>;
