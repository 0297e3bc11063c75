use thiserror::Error;

/// Errors surfaced by the estimation pipeline.
#[derive(Error, Debug)]
pub enum SqriError {
    #[error("invalid input: {0}")]
    InvalidInput(String),

    #[error("need at least {needed} respondents, found {found}")]
    InsufficientRespondents { needed: usize, found: usize },

    #[error("degenerate design: normal equations singular after ridge safeguard")]
    DegenerateDesign,

    #[error(
        "grid too small: effective degrees of freedom reach the respondent count at every lambda"
    )]
    GridTooSmall,

    #[error("moment overflow: estimating function non-finite at unit {index}")]
    MomentOverflow { index: usize },

    #[error("weight matrix degenerate: {0}")]
    WeightMatrixDegenerate(String),

    #[error("zero variance in {0}")]
    ZeroVariance(String),

    #[error("objective non-finite at the initial point")]
    NonFiniteObjective,

    #[error("bootstrap failure rate {failed}/{total} exceeds 20%")]
    BootstrapFailures { failed: usize, total: usize },

    #[error("replicate failure rate for {estimator} is {failed}/{total}, above 5%")]
    ReplicateFailures {
        estimator: String,
        failed: usize,
        total: usize,
    },

    #[error("csv error: {0}")]
    Csv(String),

    #[error("io error: {0}")]
    Io(#[from] std::io::Error),
}

pub type Result<T> = std::result::Result<T, SqriError>;

impl From<csv::Error> for SqriError {
    fn from(e: csv::Error) -> Self {
        SqriError::Csv(e.to_string())
    }
}
