use thiserror::Error;

/// Errors raised by the simulation and estimation routines.
#[derive(Debug, Error, Clone, PartialEq)]
pub enum Error {
    #[error("invalid ensemble: {0}")]
    InvalidEnsemble(String),

    #[error("singular draw: no invertible sample after {retries} retries")]
    SingularEnsemble { retries: u32 },

    #[error("invalid argument: {0}")]
    InvalidArgument(String),

    #[error("step budget exceeded: {requested} matrix steps requested, budget is {budget}")]
    Budget { requested: u128, budget: u128 },

    #[error("insufficient grid: {0}")]
    InsufficientGrid(String),

    #[error("degenerate variance: {0}")]
    DegenerateVariance(String),

    #[error("noise-dominated Kolmogorov distances at n = {ns:?}")]
    NoiseDominated { ns: Vec<u64> },

    #[error("schema mismatch: {0}")]
    Schema(String),

    #[error("i/o error: {0}")]
    Io(String),
}

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

pub type Result<T> = std::result::Result<T, Error>;
