use thiserror::Error;

#[derive(Debug, Error)]
pub enum CliError {
    #[error("usage: {0}")]
    Usage(String),

    #[error("config: {0}")]
    Config(String),

    #[error("numerical failure: {0}")]
    Numerical(epr_young::Error),

    #[error("i/o: {0}")]
    Io(String),
}

impl CliError {
    /// 0 success, 1 usage or config, 2 numerical, 3 I/O.
    pub fn exit_code(&self) -> i32 {
        match self {
            CliError::Usage(_) | CliError::Config(_) => 1,
            CliError::Numerical(_) => 2,
            CliError::Io(_) => 3,
        }
    }
}

impl From<epr_young::Error> for CliError {
    fn from(e: epr_young::Error) -> Self {
        use epr_young::Error as E;
        match e {
            E::NonConvergence { .. }
            | E::NoRoot { .. }
            | E::InsufficientCoverage { .. }
            | E::DegenerateEnsemble { .. } => CliError::Numerical(e),
            other => CliError::Usage(other.to_string()),
        }
    }
}

impl From<std::io::Error> for CliError {
    fn from(e: std::io::Error) -> Self {
        CliError::Io(e.to_string())
    }
}
