use std::path::PathBuf;

use thiserror::Error;

pub type Result<T, E = Error> = std::result::Result<T, E>;

#[derive(Debug, Error)]
pub enum Error {
    #[error("dataset is empty")]
    EmptyDataset,
    #[error("need at least {required} records, got {actual}")]
    TooFewRecords { required: usize, actual: usize },
    #[error("invalid record {row}: {reason}")]
    InvalidRecord { row: usize, reason: String },
    #[error("no events observed (every record is censored)")]
    NoEvents,
    #[error("invalid cause code {0}: causes are positive integers")]
    InvalidCause(u8),
    #[error("invalid time grid: {0}")]
    InvalidGrid(String),
    #[error("stratum error: {0}")]
    Stratum(String),

    #[error("{path}: missing column `{column}`")]
    MissingColumn { path: PathBuf, column: String },
    #[error("{path}: row {row}, column `{column}`: {reason}")]
    Parse {
        path: PathBuf,
        row: usize,
        column: String,
        reason: String,
    },

    #[error("invalid parameter `{name}`: {reason}")]
    InvalidParameter { name: &'static str, reason: String },
    #[error("dimension mismatch: expected {expected} columns, got {actual}")]
    DimensionMismatch { expected: usize, actual: usize },
    #[error("length mismatch: expected {expected}, got {actual}")]
    LengthMismatch { expected: usize, actual: usize },

    #[error("no incidence mass: sum of cause pseudo-values at t = {time} is {sum}")]
    NoIncidenceMass { time: f64, sum: f64 },
    #[error("no control mass: sum of survival pseudo-values at t = {time} is {sum}")]
    NoControlMass { time: f64, sum: f64 },
    #[error("degenerate labels: need at least one positive and one negative")]
    DegenerateLabels,
    #[error("censoring survival estimate is zero at the time required by subject {subject}")]
    ZeroCensoringSurvival { subject: usize },
    #[error("all weights are zero")]
    ZeroWeights,

    #[error("learner `{learner}`: {reason}")]
    Learner { learner: String, reason: String },
    #[error("learner `{0}` does not accept observation weights")]
    UnsupportedWeights(String),
    #[error("unknown learner `{0}`")]
    UnknownLearner(String),
    #[error("duplicate learner name `{0}`")]
    DuplicateLearner(String),
    #[error("every learner in the library failed")]
    AllLearnersFailed,
    #[error("no usable subjects (all weights are zero)")]
    NoUsableSubjects,

    #[error("quadrature did not converge: estimated error {error:e} after {intervals} subintervals")]
    Quadrature { error: f64, intervals: usize },
    #[error("degenerate event-time distribution: {0}")]
    DegenerateEventTimes(String),

    #[error("I/O error on {path}: {source}")]
    Io {
        path: PathBuf,
        #[source]
        source: std::io::Error,
    },
    #[error("CSV error: {0}")]
    Csv(#[from] csv::Error),
    #[error("JSON error: {0}")]
    Json(#[from] serde_json::Error),
}

impl Error {
    pub(crate) fn param(name: &'static str, reason: impl Into<String>) -> Self {
        Error::InvalidParameter {
            name,
            reason: reason.into(),
        }
    }

    pub(crate) fn io(path: impl Into<PathBuf>, source: std::io::Error) -> Self {
        Error::Io {
            path: path.into(),
            source,
        }
    }
}
