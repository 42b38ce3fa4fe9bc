use std::path::{Path, PathBuf};

use pca_gibbs::Error;

/// Exit codes: 0 success, 1 other failure, 2 usage, 3 parse, 4 resource cap, 5 I/O.
#[derive(Debug)]
pub enum CliError {
    Usage(String),
    Parse(String),
    Io { path: PathBuf, source: std::io::Error },
    Core(Error),
}

impl CliError {
    pub fn io(path: &Path, source: std::io::Error) -> Self {
        CliError::Io {
            path: path.to_path_buf(),
            source,
        }
    }

    pub fn exit_code(&self) -> i32 {
        match self {
            CliError::Usage(_) => 2,
            CliError::Parse(_) => 3,
            CliError::Io { .. } => 5,
            CliError::Core(e) => match e {
                Error::InvalidArgument(_) => 2,
                Error::Parse { .. } => 3,
                Error::ResourceCap { .. } => 4,
                Error::Io { .. } => 5,
                Error::InvalidState(_) | Error::Divergence { .. } | Error::NotApplicable(_) => 1,
            },
        }
    }
}

impl std::fmt::Display for CliError {
    fn fmt(&self, f: &mut std::fmt::Formatter<'_>) -> std::fmt::Result {
        match self {
            CliError::Usage(m) => write!(f, "usage error: {m}"),
            CliError::Parse(m) => write!(f, "parse error: {m}"),
            CliError::Io { path, source } => write!(f, "I/O error on {}: {source}", path.display()),
            CliError::Core(e) => write!(f, "{e}"),
        }
    }
}

impl From<Error> for CliError {
    fn from(e: Error) -> Self {
        CliError::Core(e)
    }
}
