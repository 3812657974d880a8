use std::io;
use std::path::PathBuf;

pub type Result<T, E = CliError> = std::result::Result<T, E>;

#[derive(Debug, thiserror::Error)]
pub enum CliError {
    #[error("configuration: {0}")]
    Config(String),

    #[error("{0}")]
    Numeric(String),

    #[error("{path}: {source}")]
    Io {
        path: PathBuf,
        #[source]
        source: io::Error,
    },

    #[error(transparent)]
    Library(#[from] pdmp_exit::Error),
}

impl CliError {
    pub fn config(msg: impl Into<String>) -> Self {
        CliError::Config(msg.into())
    }

    pub fn io(path: impl Into<PathBuf>, source: io::Error) -> Self {
        CliError::Io {
            path: path.into(),
            source,
        }
    }

    /// 2 for configuration errors, 3 for numerical or training failures, 4 for I/O.
    pub fn exit_code(&self) -> i32 {
        use pdmp_exit::Error as E;
        match self {
            CliError::Config(_) => 2,
            CliError::Numeric(_) => 3,
            CliError::Io { .. } => 4,
            CliError::Library(e) => match e {
                E::InvalidArgument { .. } | E::ModelMismatch { .. } | E::HorizonTooShort { .. } => {
                    2
                }
                E::Io(_) | E::GridFormat(_) => 4,
                _ => 3,
            },
        }
    }
}
