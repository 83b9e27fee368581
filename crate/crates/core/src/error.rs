use thiserror::Error;

pub type Result<T> = std::result::Result<T, Error>;

#[derive(Debug, Error)]
pub enum Error {
    #[error("invalid input: {0}")]
    InvalidInput(String),

    #[error("degenerate data: {0}")]
    DegenerateData(String),

    #[error("frequency {u} outside the safe band: |u|*h = {product} > c = {c}")]
    FrequencyOutOfBand { u: f64, product: f64, c: f64 },

    #[error("singular matrix: {0}")]
    Singular(String),

    #[error("fixed-point iteration {iteration} failed: {reason}")]
    IterationFailure { iteration: usize, reason: String },

    #[error("degenerate gain matrix: {0}")]
    DegenerateGain(String),

    #[error("config error: {0}")]
    Config(String),

    #[error(transparent)]
    Io(#[from] std::io::Error),

    #[error(transparent)]
    Csv(#[from] csv::Error),
}

impl Error {
    pub(crate) fn input(msg: impl Into<String>) -> Self {
        Error::InvalidInput(msg.into())
    }

    pub(crate) fn degenerate(msg: impl Into<String>) -> Self {
        Error::DegenerateData(msg.into())
    }
}
