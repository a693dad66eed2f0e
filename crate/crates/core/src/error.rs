use thiserror::Error;

/// Errors raised by the library. Validation problems on instances are
/// reported as data by [`crate::metric::MetricInstance::validate`]; this
/// type covers faults that stop a computation.
#[derive(Debug, Error)]
pub enum Error {
    #[error("candidates {0:?} and {1:?} are at distance zero")]
    ZeroCandidateDistance(String, String),
    #[error("unknown candidate {0:?}")]
    UnknownCandidate(String),
    #[error("unknown point {0:?}")]
    UnknownPoint(String),
    #[error("social optimum has zero cost; distortion is undefined")]
    DegenerateOptimum,
    #[error("exact enumeration needs {needed} multisets, budget is {budget}")]
    EnumerationBudgetExceeded { needed: f64, budget: u64 },
    #[error("instance needs {needed} candidates, budget is {budget}")]
    BudgetExceeded { needed: u64, budget: u64 },
    #[error("invalid instance: {0}")]
    InvalidInstance(String),
    #[error("invalid configuration: {0}")]
    InvalidConfig(String),
    #[error("theta = {0} is outside [0, 1)")]
    ThetaOutOfRange(f64),
    #[error("pair ({0}, {1}) received no samples")]
    NoSamplesForPair(usize, usize),
    #[error("invalid program: {0}")]
    InvalidProgram(String),
    #[error(transparent)]
    Json(#[from] serde_json::Error),
    #[error(transparent)]
    Io(#[from] std::io::Error),
}

pub type Result<T, E = Error> = std::result::Result<T, E>;
