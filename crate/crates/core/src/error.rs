use thiserror::Error;

/// Errors raised by the inference engines, oracles and I/O layer.
#[derive(Debug, Error, Clone, PartialEq)]
pub enum Error {
    #[error("domain error: {0}")]
    Domain(String),

    #[error("all mixture weights are zero")]
    AllWeightsZero,

    #[error("index error: {0}")]
    Index(String),

    #[error("consistency error: {0}")]
    Consistency(String),

    #[error("invalid registry: {0}")]
    Registry(String),

    #[error("invalid timeline: {0}")]
    Timeline(String),

    #[error("particle degeneracy: effective sample size {ess:.1} below {min}")]
    Degeneracy { ess: f64, min: f64 },

    #[error("normalization failure at component {component}: {detail}")]
    Normalization { component: usize, detail: String },

    #[error("schema error: {0}")]
    Schema(String),

    #[error("order error: {0}")]
    Order(String),

    #[error("value error: {0}")]
    Value(String),

    #[error("config error: {0}")]
    Config(String),

    #[error("i/o error: {0}")]
    Io(String),
}

pub type Result<T> = std::result::Result<T, Error>;

impl From<std::io::Error> for Error {
    fn from(e: std::io::Error) -> Self {
        Error::Io(e.to_string())
    }
}

impl From<csv::Error> for Error {
    fn from(e: csv::Error) -> Self {
        Error::Schema(e.to_string())
    }
}
