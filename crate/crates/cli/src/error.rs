use thiserror::Error;

pub type CliResult<T> = std::result::Result<T, CliError>;

#[derive(Debug, Error)]
pub enum CliError {
    #[error("{0}")]
    Config(String),
    #[error("{0}")]
    Io(String),
    /// An input a stage needs was never produced.
    #[error("{0}")]
    UpstreamStageMissing(String),
    #[error("{0}")]
    Stage(String),
}

impl CliError {
    pub fn code(&self) -> &'static str {
        match self {
            CliError::Config(_) => "CONFIG",
            CliError::Io(_) => "IO",
            CliError::UpstreamStageMissing(_) => "UPSTREAM_MISSING",
            CliError::Stage(_) => "STAGE",
        }
    }

    pub fn exit_code(&self) -> i32 {
        match self {
            CliError::Config(_) => 2,
            CliError::Io(_) => 3,
            CliError::UpstreamStageMissing(_) | CliError::Stage(_) => 4,
        }
    }

    /// `ERROR <code>: <msg>` on a single line.
    pub fn line(&self) -> String {
        let msg = self.to_string().replace(['\n', '\r'], " ");
        format!("ERROR {}: {msg}", self.code())
    }
}

impl From<trajalign::Error> for CliError {
    fn from(e: trajalign::Error) -> Self {
        use trajalign::Error as E;
        match e {
            E::InvalidConfig(_) | E::OutOfRegime(_) => CliError::Config(e.to_string()),
            E::Io(_) | E::Parse { .. } | E::Json(_) | E::NonMonotoneTimestamps { .. } => CliError::Io(e.to_string()),
            _ => CliError::Stage(e.to_string()),
        }
    }
}
