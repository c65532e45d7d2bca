use thiserror::Error;

/// Errors raised by tree construction, measure algebra and risk evaluation.
#[derive(Debug, Error, Clone, PartialEq)]
pub enum Error {
    #[error("malformed tree: {0}")]
    MalformedTree(String),
    #[error("bad probabilities: {0}")]
    BadProbabilities(String),
    #[error("bad discount weights: {0}")]
    BadMu(String),
    #[error("time order violated: {0}")]
    TimeOrder(String),
    #[error("bad density: {0}")]
    BadDensity(String),
    #[error("measurability violation: {0}")]
    MeasurabilityViolation(String),
    #[error("length mismatch: expected {expected} values, got {got}")]
    LengthMismatch { expected: usize, got: usize },
    #[error("not a supermartingale at node {node}: conditional mean {mean} exceeds {value}")]
    NotSupermartingale { node: u64, mean: f64, value: f64 },
    #[error("process must start at 1, got {0}")]
    BadStart(f64),
    #[error("negative value {value} at node {node}")]
    Negative { node: u64, value: f64 },
    #[error("not a martingale at node {node}: conditional mean {mean} differs from {value}")]
    NotMartingale { node: u64, mean: f64, value: f64 },
    #[error("bad discount measure: {0}")]
    BadGamma(String),
    #[error("measures are not absolutely continuous on the pasting sigma-field: {0}")]
    NotAbsContinuous(String),
    #[error("unsupported risk measure kind `{0}`")]
    UnsupportedKind(String),
    #[error("unsupported inner risk measure: {0}")]
    UnsupportedInner(String),
    #[error("invalid parameter: {0}")]
    InvalidParameter(String),
    #[error("optimizer failed: {0}")]
    OptimizerFailed(String),
    #[error("infeasible measure family: {0}")]
    InfeasibleFamily(String),
    #[error("inconsistent input: {0}")]
    InconsistentInput(String),
    #[error("penalty is infinite at time 0")]
    InfinitePenalty,
    #[error("bad term structure: {0}")]
    BadTermStructure(String),
    #[error("json: {0}")]
    Json(String),
}

pub type Result<T> = std::result::Result<T, Error>;

impl Error {
    /// True for malformed or out-of-range inputs, false for failures during evaluation.
    pub fn is_input_error(&self) -> bool {
        !matches!(
            self,
            Error::NotAbsContinuous(_)
                | Error::UnsupportedKind(_)
                | Error::OptimizerFailed(_)
                | Error::InfeasibleFamily(_)
                | Error::InconsistentInput(_)
                | Error::InfinitePenalty
        )
    }
}
