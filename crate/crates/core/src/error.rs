use thiserror::Error;

pub type Result<T, E = Error> = std::result::Result<T, E>;

#[derive(Debug, Error)]
pub enum Error {
    /// Malformed input file or unknown enumeration value.
    #[error("format error: {0}")]
    Format(String),

    /// A value lies outside its admissible range.
    #[error("range error: {0}")]
    Range(String),

    /// Inconsistent dimensions between arguments.
    #[error("dimension mismatch: {0}")]
    Dim(String),

    /// Exact enumeration requested on a model that is too large.
    #[error("model too large for exact enumeration: {visible} visible + {hidden} hidden > {limit}")]
    OracleSize {
        visible: usize,
        hidden: usize,
        limit: usize,
    },

    /// Non-finite values appeared during optimization.
    #[error("numeric error: {0}")]
    Numeric(String),

    /// A statistic is undefined for the given input.
    #[error("degenerate input: {0}")]
    Degenerate(String),

    #[error("unsupported format version {found} (expected {expected})")]
    Version { found: u32, expected: u32 },

    #[error("corrupt file: {0}")]
    Corrupt(String),

    /// Invalid configuration or argument combination.
    #[error("invalid configuration: {0}")]
    Config(String),

    #[error(transparent)]
    Io(#[from] std::io::Error),
}

impl Error {
    pub(crate) fn dim(msg: impl Into<String>) -> Self {
        Error::Dim(msg.into())
    }
}
