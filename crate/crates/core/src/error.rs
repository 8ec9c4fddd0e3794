use std::path::PathBuf;

use thiserror::Error;

pub type Result<T, E = Error> = std::result::Result<T, E>;

#[derive(Debug, Error)]
pub enum Error {
    #[error("node {node}: probability sum {sum} ≠ 1")]
    ProbabilitySum { node: String, sum: f64 },

    #[error("node {node}: dangling parent {parent:?}")]
    DanglingParent { node: String, parent: String },

    #[error("node {node}: time {time} does not follow parent time {parent_time}")]
    TimeGap {
        node: String,
        time: usize,
        parent_time: usize,
    },

    #[error("node {node}: transition probability {prob} must lie in (0, 1]")]
    NonPositiveProbability { node: String, prob: f64 },

    #[error("invalid tree: {0}")]
    InvalidTree(String),

    #[error("random variable {0:?} not found")]
    MissingRv(String),

    #[error("random variable {rv:?} has no value at node {node}")]
    MissingValue { rv: String, node: String },

    #[error("conditioning time {t} exceeds measurability time {r}")]
    TimeOrder { t: usize, r: usize },

    #[error("horizon mismatch: tree has T = {tree}, {what} has T = {other}")]
    HorizonMismatch {
        tree: usize,
        what: &'static str,
        other: usize,
    },

    #[error("invalid parameter: {0}")]
    InvalidParameter(String),

    #[error("conjugate is +∞ at y = {0} (y must be positive)")]
    ConjugateDomain(f64),

    #[error("root bracketing failed: {0}")]
    Bracketing(String),

    #[error("no convergence after {iterations} iterations (best residual {residual:e})")]
    NonConvergence { iterations: usize, residual: f64 },

    #[error("not a positive martingale (residual {residual:e}, min value {min:e})")]
    NotMartingale { residual: f64, min: f64 },

    #[error("inconsistent survival state: {0}")]
    InconsistentState(String),

    #[error("budget exceeded: {0}")]
    Budget(String),

    #[error("{path}:{line}:{column}: {message}")]
    Parse {
        path: PathBuf,
        line: usize,
        column: usize,
        message: String,
    },

    #[error(transparent)]
    Io(#[from] std::io::Error),

    #[error(transparent)]
    Json(#[from] serde_json::Error),

    #[error(transparent)]
    Csv(#[from] csv::Error),
}

impl Error {
    pub(crate) fn parse(path: impl Into<PathBuf>, err: serde_json::Error) -> Self {
        Error::Parse {
            path: path.into(),
            line: err.line(),
            column: err.column(),
            message: err.to_string(),
        }
    }
}
