use thiserror::Error;

#[derive(Debug, Error)]
pub enum CliError {
    #[error("config: {0}")]
    Config(String),

    #[error("{0}")]
    Io(#[from] std::io::Error),

    #[error("snapshot format: {0}")]
    Format(String),

    #[error("solver blow-up at t = {time}: {reason}")]
    BlowUp { time: f64, reason: String },

    #[error("degenerate diagnostics: {0}")]
    Degenerate(String),

    #[error(transparent)]
    Core(enstrophy_core::Error),
}

impl From<enstrophy_core::Error> for CliError {
    fn from(e: enstrophy_core::Error) -> Self {
        use enstrophy_core::Error as E;
        match e {
            E::BlowUp { time, reason } => CliError::BlowUp { time, reason },
            E::DegeneratePalinstrophy => CliError::Degenerate(e.to_string()),
            other => CliError::Core(other),
        }
    }
}

impl From<serde_json::Error> for CliError {
    fn from(e: serde_json::Error) -> Self {
        CliError::Format(e.to_string())
    }
}

impl From<csv::Error> for CliError {
    fn from(e: csv::Error) -> Self {
        CliError::Format(e.to_string())
    }
}

impl CliError {
    /// 0 ok, 1 usage or config, 2 solver blow-up, 3 degenerate diagnostics.
    pub fn exit_code(&self) -> i32 {
        match self {
            CliError::BlowUp { .. } => 2,
            CliError::Degenerate(_) => 3,
            _ => 1,
        }
    }
}
