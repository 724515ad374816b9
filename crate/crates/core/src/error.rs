use thiserror::Error;

pub type Result<T> = std::result::Result<T, Error>;

#[derive(Debug, Error)]
pub enum Error {
    #[error("invalid argument: {0}")]
    InvalidArgument(String),

    #[error("dimension mismatch: expected {expected}, found {found}")]
    DimensionMismatch { expected: usize, found: usize },

    #[error("aggregation weights sum to {sum}, expected 1")]
    WeightSum { sum: f64 },

    #[error("invalid sampling plan: {0}")]
    InvalidPlan(String),

    #[error("learning rate infeasible: denominator 2mu - 4 eta L^2 g = {denominator}")]
    InfeasibleLearningRate { denominator: f64 },

    #[error("non-contractive recursion: factor {factor} not in [0, 1)")]
    NonContractive { factor: f64 },

    #[error("{what} did not converge after {iterations} iterations")]
    NonConvergence { what: &'static str, iterations: usize },

    #[error("config line {line}: {message}")]
    Parse { line: usize, message: String },

    #[error("table rejected row: {0}")]
    Table(String),

    #[error(transparent)]
    Io(#[from] std::io::Error),

    #[error(transparent)]
    Csv(#[from] csv::Error),
}

impl Error {
    pub(crate) fn arg(msg: impl Into<String>) -> Self {
        Error::InvalidArgument(msg.into())
    }
}
