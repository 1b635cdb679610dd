use std::fmt;
use std::process::ExitCode;

/// Process exit codes. Usage errors exit with 2 (reported by clap).
#[derive(Debug, Clone, Copy, PartialEq, Eq)]
pub enum Failure {
    Other = 1,
    Config = 3,
    Data = 4,
    Numeric = 5,
}

#[derive(Debug)]
pub struct CliError {
    pub failure: Failure,
    pub message: String,
}

pub type CliResult<T> = Result<T, CliError>;

impl CliError {
    pub fn config(message: impl Into<String>) -> Self {
        Self { failure: Failure::Config, message: message.into() }
    }

    pub fn data(message: impl Into<String>) -> Self {
        Self { failure: Failure::Data, message: message.into() }
    }

    pub fn exit_code(&self) -> ExitCode {
        ExitCode::from(self.failure as u8)
    }
}

impl fmt::Display for CliError {
    fn fmt(&self, f: &mut fmt::Formatter<'_>) -> fmt::Result {
        f.write_str(&self.message)
    }
}

impl std::error::Error for CliError {}

impl From<hst_core::Error> for CliError {
    fn from(e: hst_core::Error) -> Self {
        use hst_core::Error as E;
        let failure = match e {
            E::NonFiniteLoss { .. } | E::LossDomain(_) | E::FrozenMutated { .. } => Failure::Numeric,
            E::Plan(_) | E::InvalidLayer(_) | E::LinkedShape { .. } | E::MissingBlock { .. } => Failure::Config,
            E::Parse { .. }
            | E::Data(_)
            | E::Label(_)
            | E::Archive(_)
            | E::Checksum { .. }
            | E::Shape(_)
            | E::LayerShape { .. }
            | E::Csv(_)
            | E::Json(_)
            | E::Io { .. } => Failure::Data,
            E::Eval(_) => Failure::Other,
        };
        Self { failure, message: e.to_string() }
    }
}

impl From<std::io::Error> for CliError {
    fn from(e: std::io::Error) -> Self {
        Self { failure: Failure::Other, message: e.to_string() }
    }
}

impl From<csv::Error> for CliError {
    fn from(e: csv::Error) -> Self {
        Self { failure: Failure::Other, message: e.to_string() }
    }
}

impl From<serde_json::Error> for CliError {
    fn from(e: serde_json::Error) -> Self {
        Self { failure: Failure::Other, message: e.to_string() }
    }
}
