use thiserror::Error;

use crate::WorkerId;

pub type Result<T> = std::result::Result<T, Error>;

#[derive(Debug, Error)]
pub enum Error {
    #[error("invalid dimensions: {0}")]
    InvalidDimensions(String),

    #[error("empty input: {0}")]
    EmptyInput(&'static str),

    #[error("step size must be positive, got {0}")]
    NonpositiveStepSize(f64),

    #[error("insufficient workers: need {needed}, have {available}")]
    InsufficientWorkers { needed: usize, available: usize },

    #[error("point {0} has a single copy; detection needs at least two")]
    SingleCopyPoint(usize),

    #[error("no value is held by at least {needed} of {copies} copies")]
    NoMajority { needed: usize, copies: usize },

    #[error("linear detection code requires n = 3, f = 1 (got n = {n}, f = {f})")]
    WrongConfiguration { n: usize, f: usize },

    #[error("{name} = {value} is outside {range}")]
    OutOfRange {
        name: &'static str,
        value: f64,
        range: &'static str,
    },

    #[error("delta = {delta} exceeds 2f/(2f+1) = {max} and would push q above 1")]
    DeltaTooLarge { delta: f64, max: f64 },

    #[error("fault budget f must be at least 1")]
    ZeroFaults,

    #[error("loss must be nonnegative, got {0}")]
    NegativeLoss(f64),

    #[error("cannot trim {trim} from each end of {len} values")]
    OverTrimmed { trim: usize, len: usize },

    #[error("no active workers remain")]
    EmptyActiveSet,

    #[error("config error:\n{}", .0.join("\n"))]
    Config(Vec<String>),

    #[error("invariant violated: honest worker {0} was identified as Byzantine")]
    HonestWorkerEliminated(WorkerId),

    #[error("invariant violated: {0}")]
    Invariant(String),

    #[error("malformed csv: {0}")]
    Csv(String),

    #[error(transparent)]
    Io(#[from] std::io::Error),
}

impl From<csv::Error> for Error {
    fn from(e: csv::Error) -> Self {
        Error::Csv(e.to_string())
    }
}

impl Error {
    /// Process exit code for the CLI.
    pub fn exit_code(&self) -> i32 {
        match self {
            Error::Config(_) => 2,
            Error::HonestWorkerEliminated(_) | Error::Invariant(_) => 3,
            _ => 1,
        }
    }
}
