use thiserror::Error;

/// Failure classes, one per exit code.
#[derive(Debug, Error)]
pub enum CliError {
    #[error("validation failed: {0}")]
    Validation(String),
    #[error("input error: {0}")]
    Input(String),
    #[error("numerical error: {0}")]
    Numerical(String),
}

impl CliError {
    pub fn exit_code(&self) -> i32 {
        match self {
            Self::Validation(_) => 2,
            Self::Input(_) => 3,
            Self::Numerical(_) => 4,
        }
    }
}

impl From<thermocorr::Error> for CliError {
    fn from(e: thermocorr::Error) -> Self {
        use thermocorr::Error as E;
        match e {
            E::Domain(_) | E::Range { .. } | E::Parse(_) | E::Io(_) | E::Csv(_) | E::Json(_) => {
                Self::Input(e.to_string())
            }
            E::Integration { .. }
            | E::SubUnitarity(_)
            | E::TailFit(_)
            | E::Singular
            | E::NotPositiveSemidefinite(_) => Self::Numerical(e.to_string()),
        }
    }
}

impl From<std::io::Error> for CliError {
    fn from(e: std::io::Error) -> Self {
        Self::Input(e.to_string())
    }
}

impl From<serde_json::Error> for CliError {
    fn from(e: serde_json::Error) -> Self {
        Self::Input(e.to_string())
    }
}
