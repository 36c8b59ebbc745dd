use std::path::PathBuf;

/// Errors produced by the codec and its evaluation tools.
#[derive(Debug, thiserror::Error)]
pub enum Error {
    #[error("configuration error: {0}")]
    Config(String),

    #[error("validation error: {0}")]
    Validation(String),

    #[error("kernel of length {kernel_len} does not fit a signal of length {signal_len}")]
    Sizing { kernel_len: usize, signal_len: usize },

    #[error("insufficient data: pattern lasts {duration:.4} s, at least {min_duration:.4} s required")]
    InsufficientData { duration: f64, min_duration: f64 },

    #[error("precision is undefined for a zero-energy reference signal")]
    UndefinedPrecision,

    #[error("neuron never fired on the dataset, spike-triggered average is empty")]
    EmptySta,

    #[error("{path}:{line}: {message}")]
    Parse {
        path: PathBuf,
        line: usize,
        message: String,
    },

    #[error("i/o error on {path}: {source}")]
    Io {
        path: PathBuf,
        #[source]
        source: std::io::Error,
    },

    #[error("json error in {path}: {source}")]
    Json {
        path: PathBuf,
        #[source]
        source: serde_json::Error,
    },
}

pub type Result<T> = std::result::Result<T, Error>;

impl Error {
    pub(crate) fn config(msg: impl Into<String>) -> Self {
        Error::Config(msg.into())
    }

    pub(crate) fn validation(msg: impl Into<String>) -> Self {
        Error::Validation(msg.into())
    }
}
