use std::fmt;
use std::io;
use std::path::Path;

#[derive(Debug)]
pub enum CliError {
    /// Bad flags, configuration or input data.
    Invalid(String),
    Io(String),
    Lib(mlrq::Error),
}

impl CliError {
    pub fn io(path: &Path, e: io::Error) -> Self {
        CliError::Io(format!("{}: {e}", path.display()))
    }

    pub fn exit_code(&self) -> u8 {
        match self {
            CliError::Invalid(_) => 1,
            CliError::Io(_) => 2,
            CliError::Lib(e) if e.is_io() => 2,
            CliError::Lib(_) => 1,
        }
    }
}

impl fmt::Display for CliError {
    fn fmt(&self, f: &mut fmt::Formatter<'_>) -> fmt::Result {
        match self {
            CliError::Invalid(m) | CliError::Io(m) => f.write_str(m),
            CliError::Lib(e) => write!(f, "{e}"),
        }
    }
}

impl From<mlrq::Error> for CliError {
    fn from(e: mlrq::Error) -> Self {
        CliError::Lib(e)
    }
}
