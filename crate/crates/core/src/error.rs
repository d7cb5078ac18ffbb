use thiserror::Error;

pub type Result<T> = std::result::Result<T, Error>;

#[derive(Debug, Error)]
pub enum Error {
    #[error("I/O error: {0}")]
    Io(#[from] std::io::Error),

    #[error("parse error at byte {offset}: {message}")]
    Parse { offset: usize, message: String },

    #[error("row {row}: {message}")]
    Row { row: usize, message: String },

    #[error("channel {channel} is not in the declared channel set {declared:?}")]
    UnknownChannel { channel: u8, declared: Vec<u8> },

    #[error("invalid argument: {0}")]
    InvalidArgument(String),

    #[error("line list: {0}")]
    LineList(String),

    #[error("maximum lag {max_lag} ticks exceeds the acquisition span {span} ticks")]
    LagExceedsSpan { max_lag: i64, span: u64 },

    #[error("brute-force guard exceeded: {pairs} pairs > {limit}")]
    GuardExceeded { pairs: u128, limit: u128 },

    #[error("level system has no unique steady state: {0}")]
    Degenerate(String),

    #[error("singular normal equations; unidentifiable direction {direction}")]
    Singular { direction: String },

    #[error("model evaluation failed: {0}")]
    Model(String),

    #[error("fit outcomes were computed on different data")]
    DigestMismatch,

    #[error("serialization: {0}")]
    Serde(String),
}

impl From<serde_json::Error> for Error {
    fn from(e: serde_json::Error) -> Self {
        Error::Serde(e.to_string())
    }
}

impl From<toml::de::Error> for Error {
    fn from(e: toml::de::Error) -> Self {
        Error::Serde(e.to_string())
    }
}
