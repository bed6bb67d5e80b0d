use thiserror::Error;

/// Errors produced by the sampling, estimation and verification routines.
#[derive(Debug, Error)]
pub enum Error {
    #[error("population is empty")]
    EmptyPopulation,

    #[error("unit {id:?}: inclusion probability {pi} outside (0, 1]")]
    ProbabilityOutOfRange { id: String, pi: f64 },

    #[error("inclusion probabilities sum to {sum}, which is {deviation:e} away from the nearest integer {nearest}")]
    NonIntegerSampleSize { sum: f64, nearest: f64, deviation: f64 },

    #[error("duplicate unit id {0:?}")]
    DuplicateId(String),

    #[error("length mismatch: {what} has {got} entries, expected {expected}")]
    LengthMismatch { what: &'static str, got: usize, expected: usize },

    #[error("population has no y values")]
    MissingY,

    #[error("unit index {index} is not part of the population (N = {population})")]
    UnknownUnit { index: usize, population: usize },

    #[error("stratum index {index} out of range 1..={strata}")]
    StratumOutOfRange { index: usize, strata: usize },

    #[error("population of size {size} exceeds enumeration cap {cap} (estimated {estimated_leaves:e} leaves)")]
    EnumerationCap { size: usize, cap: usize, estimated_leaves: f64 },

    #[error("joint inclusion probability is zero for sampled pairs {pairs:?}")]
    ZeroJointProbability { pairs: Vec<(usize, usize)> },

    #[error("at least two sampled units are required, got {0}")]
    SampleTooSmall(usize),

    #[error("variance must be nonnegative, got {0}")]
    NegativeVariance(f64),

    #[error("alpha must lie in (0, 0.5], got {0}")]
    InvalidAlpha(f64),

    #[error("invalid model parameter: {0}")]
    InvalidModel(String),

    #[error("joint inclusion probabilities are required for a correlated kernel")]
    MissingJoint,

    #[error("design variance is zero; standardized statistics are undefined")]
    DegenerateVariance,

    #[error("unit with inclusion probability 1 ({id:?}) is not allowed here")]
    CertaintyUnit { id: String },

    #[error("empty input")]
    EmptyInput,

    #[error("internal consistency check failed: {0}")]
    CrossCheck(String),

    #[error("csv: {0}")]
    Csv(#[from] csv::Error),

    #[error("csv row {row}: {message}")]
    CsvRow { row: usize, message: String },

    #[error("json: {0}")]
    Json(#[from] serde_json::Error),

    #[error("io: {0}")]
    Io(#[from] std::io::Error),
}

pub type Result<T, E = Error> = std::result::Result<T, E>;
