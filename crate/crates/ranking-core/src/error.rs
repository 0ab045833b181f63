use thiserror::Error;

#[derive(Debug, Error, Clone, PartialEq)]
pub enum RankingError {
    #[error("dataset is empty")]
    EmptyDataset,

    #[error("dataset references fewer than two distinct policies")]
    SinglePolicy,

    #[error("record {trial_id}: policy_i and policy_j are both {policy}")]
    SelfComparison { trial_id: String, policy: usize },

    #[error("record {trial_id}: policy index {index} out of range for {num_policies} policies")]
    PolicyOutOfRange {
        trial_id: String,
        index: usize,
        num_policies: usize,
    },

    #[error("record {trial_id}: progress value {value} outside [0, 1]")]
    ProgressOutOfRange { trial_id: String, value: f64 },

    #[error("policy {policy} has no progress observations")]
    MissingProgress { policy: usize },

    #[error("no record carries progress values")]
    NoProgressData,

    #[error("score vectors have mismatched lengths {left} and {right}")]
    LengthMismatch { left: usize, right: usize },

    #[error("need at least two scores, got {0}")]
    TooFewScores(usize),

    #[error("score vector has zero variance")]
    ZeroVariance,

    #[error("non-finite value produced while updating {0}")]
    NonFinite(&'static str),

    #[error("invalid configuration: {0}")]
    InvalidConfig(String),

    #[error("parse error at line {line}: {message}")]
    Parse { line: usize, message: String },

    #[error("io error: {0}")]
    Io(String),
}

impl From<std::io::Error> for RankingError {
    fn from(err: std::io::Error) -> Self {
        RankingError::Io(err.to_string())
    }
}

pub type Result<T> = std::result::Result<T, RankingError>;
