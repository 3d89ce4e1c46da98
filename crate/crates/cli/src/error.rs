use std::fmt;
use std::path::Path;

/// Failure of a command, carrying the process exit status.
#[derive(Debug)]
pub enum CliError {
    Core(fredf::Error),
    /// Missing or unreadable input data.
    Data(String),
    /// Bad configuration file or flag combination.
    Config(String),
    /// Output could not be written.
    Output(String),
    /// The command ran but one of its checks failed.
    Assertion(String),
}

pub type CliResult<T> = Result<T, CliError>;

impl CliError {
    pub fn exit_code(&self) -> i32 {
        use fredf::Error as E;
        match self {
            CliError::Data(_) => 3,
            CliError::Config(_) => 4,
            CliError::Output(_) => 1,
            CliError::Assertion(_) => 7,
            CliError::Core(e) => match e {
                E::Ingest { .. } | E::Csv(_) | E::Empty(_) => 3,
                E::Config(_)
                | E::Shape { .. }
                | E::UnsupportedLength(_)
                | E::OutOfRange { .. }
                | E::Partition(_)
                | E::InvalidBand { .. } => 4,
                E::Divergence { .. } | E::Numeric(_) => 5,
                E::Checkpoint(_) => 6,
                _ => 1,
            },
        }
    }

    pub fn kind(&self) -> &'static str {
        match self.exit_code() {
            3 => "data error",
            4 => "configuration error",
            5 => "numeric error",
            6 => "checkpoint error",
            7 => "check failed",
            _ => "error",
        }
    }

    pub fn output(path: &Path, e: impl fmt::Display) -> Self {
        CliError::Output(format!("cannot write {}: {e}", path.display()))
    }
}

impl fmt::Display for CliError {
    fn fmt(&self, f: &mut fmt::Formatter<'_>) -> fmt::Result {
        match self {
            CliError::Core(e) => write!(f, "{e}"),
            CliError::Data(m) | CliError::Config(m) | CliError::Output(m) | CliError::Assertion(m) => f.write_str(m),
        }
    }
}

impl std::error::Error for CliError {}

impl From<fredf::Error> for CliError {
    fn from(e: fredf::Error) -> Self {
        CliError::Core(e)
    }
}
