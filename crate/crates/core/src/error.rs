use thiserror::Error;

#[derive(Debug, Error)]
pub enum Error {
    #[error("dimension error: {0}")]
    Dimension(String),

    #[error("config error: {0}")]
    Config(String),

    #[error("data error: {0}")]
    Data(String),

    #[error("parse error at line {line}: {field}: {message}")]
    Parse {
        line: usize,
        field: String,
        message: String,
    },

    #[error("synchronization error: {0}")]
    Sync(String),

    #[error("numeric error: {0}")]
    Numeric(String),

    #[error("empty attention: no keys and no memory slots")]
    EmptyAttention,

    #[error("compatibility error: {0}")]
    Compatibility(String),

    #[error("io error: {0}")]
    Io(#[from] std::io::Error),
}

impl Error {
    /// Process exit code for the command line: 2 config, 3 data, 4 numeric.
    pub fn exit_code(&self) -> i32 {
        match self {
            Error::Config(_) | Error::Compatibility(_) => 2,
            Error::Data(_) | Error::Parse { .. } | Error::Sync(_) | Error::Io(_) => 3,
            Error::Dimension(_) | Error::Numeric(_) | Error::EmptyAttention => 4,
        }
    }

    /// Short machine-readable kind tag.
    pub fn kind(&self) -> &'static str {
        match self {
            Error::Dimension(_) => "dimension",
            Error::Config(_) => "config",
            Error::Data(_) => "data",
            Error::Parse { .. } => "parse",
            Error::Sync(_) => "sync",
            Error::Numeric(_) => "numeric",
            Error::EmptyAttention => "empty_attention",
            Error::Compatibility(_) => "compatibility",
            Error::Io(_) => "io",
        }
    }
}

pub type Result<T> = std::result::Result<T, Error>;

fn with_path(path: &std::path::Path, e: std::io::Error) -> Error {
    Error::Io(std::io::Error::new(e.kind(), format!("{}: {e}", path.display())))
}

/// `fs::read_to_string` whose error names the file.
pub fn read_text(path: impl AsRef<std::path::Path>) -> Result<String> {
    std::fs::read_to_string(path.as_ref()).map_err(|e| with_path(path.as_ref(), e))
}

/// `fs::write` whose error names the file.
pub fn write_file(path: impl AsRef<std::path::Path>, contents: impl AsRef<[u8]>) -> Result<()> {
    std::fs::write(path.as_ref(), contents).map_err(|e| with_path(path.as_ref(), e))
}
