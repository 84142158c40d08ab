use std::path::PathBuf;

use thiserror::Error;

/// Failures while loading, saving or validating a dataset.
#[derive(Debug, Error)]
pub enum DatasetError {
    #[error("i/o error on {path}: {source}")]
    Io {
        path: PathBuf,
        #[source]
        source: std::io::Error,
    },
    #[error("malformed manifest {path}: {source}")]
    Manifest {
        path: PathBuf,
        #[source]
        source: serde_json::Error,
    },
    #[error("malformed header: {0}")]
    MalformedHeader(String),
    #[error("malformed record at line {line}: {message}")]
    MalformedRecord { line: u64, message: String },
    #[error("dimension mismatch in {field}: expected {expected}, found {found}")]
    DimensionMismatch {
        field: String,
        expected: usize,
        found: usize,
    },
    #[error("non-finite value in {field} at row {row}, column {col}")]
    NonFinite {
        field: String,
        row: usize,
        col: usize,
    },
    #[error("invalid episode boundaries: {0}")]
    EpisodeStarts(String),
    #[error("invalid metadata: {0}")]
    InvalidMeta(String),
    #[error("empty dataset: {0}")]
    Empty(&'static str),
}

impl DatasetError {
    pub(crate) fn io(path: impl Into<PathBuf>, source: std::io::Error) -> Self {
        Self::Io {
            path: path.into(),
            source,
        }
    }
}

#[derive(Debug, Error, PartialEq)]
pub enum ReturnsError {
    #[error("empty trajectory")]
    EmptyTrajectory,
    #[error("no trajectories")]
    NoTrajectories,
    #[error("floor above observed minimum: trajectory {trajectory} has return {value} below floor {floor}")]
    FloorAboveMinimum {
        trajectory: usize,
        value: f64,
        floor: f64,
    },
    #[error("degenerate return distribution: mean normalized return is {0}")]
    Degenerate(f64),
}

#[derive(Debug, Error)]
pub enum BehaviorError {
    #[error("precondition violated: {0}")]
    Precondition(String),
    #[error("normalized action component {value} at dimension {dim} is outside (-1, 1)")]
    ActionOutOfRange { dim: usize, value: f64 },
    #[error(
        "non-finite loss at epoch {epoch}, step {step}; try a smaller learning rate (current {learning_rate})"
    )]
    NonFiniteLoss {
        epoch: usize,
        step: usize,
        learning_rate: f64,
    },
    #[error("empty stochasticity profile")]
    EmptyProfile,
    #[error("policy file error: {0}")]
    Persist(String),
    #[error(transparent)]
    Io(#[from] std::io::Error),
}

#[derive(Debug, Error, PartialEq)]
pub enum RankingError {
    #[error("non-finite value {value} for {name}")]
    NonFinite { name: String, value: f64 },
    #[error("length mismatch: {0} vs {1}")]
    LengthMismatch(usize, usize),
    #[error("input is not a permutation of 0..{0}")]
    NotPermutation(usize),
    #[error("ranking requires >= {needed} datasets, got {found}")]
    TooFew { needed: usize, found: usize },
    #[error("zero mean normalized data return")]
    ZeroMean,
    #[error("cannot select {k} of {n} datasets")]
    SelectionTooLarge { k: usize, n: usize },
}
