use std::path::Path;

/// Failure of one CLI run, carrying the process exit code it maps to.
#[derive(Debug)]
pub enum CliError {
    /// Bad flags, configuration or input files (exit 2).
    Config(String),
    /// Failure inside the toolkit; numerical failures exit 3, the rest 2.
    Core(sidelobe::Error),
    /// Filesystem failure (exit 4).
    Io(String),
}

impl CliError {
    pub fn io(path: &Path, e: std::io::Error) -> Self {
        CliError::Io(format!("{}: {e}", path.display()))
    }

    pub fn exit_code(&self) -> i32 {
        match self {
            CliError::Config(_) => 2,
            CliError::Core(e) if e.is_numerical() => 3,
            CliError::Core(sidelobe::Error::Io(_)) => 4,
            CliError::Core(_) => 2,
            CliError::Io(_) => 4,
        }
    }
}

impl std::fmt::Display for CliError {
    fn fmt(&self, f: &mut std::fmt::Formatter<'_>) -> std::fmt::Result {
        match self {
            CliError::Config(m) => write!(f, "configuration error: {m}"),
            CliError::Core(e) if e.is_numerical() => write!(f, "numerical failure: {e}"),
            CliError::Core(e) => write!(f, "{e}"),
            CliError::Io(m) => write!(f, "i/o error: {m}"),
        }
    }
}

impl From<sidelobe::Error> for CliError {
    fn from(e: sidelobe::Error) -> Self {
        CliError::Core(e)
    }
}
