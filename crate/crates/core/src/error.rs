use thiserror::Error;

/// Errors raised by the inference routines.
#[derive(Debug, Error, Clone, PartialEq)]
pub enum Error {
    #[error("invalid dataset: {0}")]
    InvalidDataset(String),
    #[error("invalid label {label} for {kind} data")]
    InvalidLabel { label: i64, kind: &'static str },
    #[error("class {0} has no observations")]
    EmptyClass(usize),
    #[error("dimension mismatch: expected {expected}, got {got}")]
    DimensionMismatch { expected: usize, got: usize },
    #[error("cutoffs must be finite and strictly increasing: {0:?}")]
    UnorderedCutoffs(Vec<f64>),
    #[error("covariate value {0} lies outside [0, 1]")]
    CovariateOutOfRange(f64),
    #[error("observation {0} has no covariate")]
    MissingCovariate(usize),
    #[error("wrong problem kind: {0}")]
    WrongKind(&'static str),
    #[error("invalid parameter: {0}")]
    InvalidParameter(String),
    #[error("invalid knot grid: {0}")]
    InvalidKnots(String),
    #[error("root finding failed: {0}")]
    RootFinding(String),
}

pub type Result<T> = std::result::Result<T, Error>;
