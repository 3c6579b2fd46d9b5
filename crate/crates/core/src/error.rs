use std::path::PathBuf;

pub type Result<T, E = Error> = std::result::Result<T, E>;

#[derive(Debug, thiserror::Error)]
pub enum Error {
    /// Invalid option, flag, mask, or config-file key. Exit status 1.
    #[error("configuration error: {0}")]
    Config(String),

    #[error("{path}: {source}")]
    Io {
        path: PathBuf,
        #[source]
        source: std::io::Error,
    },

    #[error("{path}:{line}: {msg}")]
    Parse { path: PathBuf, line: u64, msg: String },

    #[error("data error: {0}")]
    Data(String),

    #[error("unknown entity: {0}")]
    UnknownEntity(String),

    #[error("unknown type: {0}")]
    UnknownType(String),

    #[error("entity has no description: {0}")]
    MissingDescription(String),

    #[error("shape mismatch in layer {layer}: {msg}")]
    Shape { layer: usize, msg: String },

    #[error("training error: {0}")]
    Training(String),

    #[error("evaluation error: {0}")]
    Evaluation(String),

    #[error("sampler error: {0}")]
    Sampling(String),
}

impl Error {
    pub fn io(path: impl Into<PathBuf>, source: std::io::Error) -> Self {
        Error::Io {
            path: path.into(),
            source,
        }
    }

    /// Process exit status for the CLI: 1 for configuration errors, 2 for
    /// anything wrong with the data itself.
    pub fn exit_code(&self) -> i32 {
        match self {
            Error::Config(_) => 1,
            _ => 2,
        }
    }
}
