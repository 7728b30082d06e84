use thiserror::Error;

use crate::kernel::TransitivityReport;

/// Coarse classification used by the command line front end to pick an exit code.
#[derive(Debug, Clone, Copy, PartialEq, Eq)]
pub enum ErrorClass {
    /// Malformed or inadmissible input.
    Validation,
    /// Input was well formed but a numerical procedure could not complete.
    Numerical,
}

#[derive(Debug, Error)]
pub enum Error {
    #[error("matrix is not square: {rows} rows, row {bad_row} has {len} entries")]
    NonSquare { rows: usize, bad_row: usize, len: usize },
    #[error("menu must contain at least two alternatives, got {0}")]
    MenuTooSmall(usize),
    #[error("entry ({0}, {1}) is outside [0, 1]: {2}")]
    EntryOutOfRange(usize, usize, f64),
    #[error("kernel is not positive: entry ({0}, {1}) = {2}")]
    NotPositive(usize, usize, f64),
    #[error("kernel is not transitive: cycle discrepancy {} on triple {:?}", .0.max_cycle_discrepancy, .0.worst_triple)]
    NotTransitive(TransitivityReport),
    #[error("invalid probability distribution: {0}")]
    InvalidDistribution(String),
    #[error("symmetric weight for pair ({0}, {1}) must be positive and finite, got {2}")]
    InvalidSymmetricWeight(usize, usize, f64),
    #[error("dimension mismatch: expected {expected}, got {found}")]
    DimensionMismatch { expected: usize, found: usize },
    #[error("column {0} does not sum to one (sum = {1})")]
    ColumnNotStochastic(usize, f64),
    #[error("negative entry ({0}, {1}) = {2}")]
    NegativeEntry(usize, usize, f64),
    #[error("chain is not ergodic: {0}")]
    NotErgodic(String),
    #[error("chain is not reversible with respect to the supplied distribution (residual {0:e})")]
    NotReversible(f64),
    #[error("linear system is singular")]
    Singular,
    #[error("eigendecomposition failed: {0}")]
    Eigen(String),
    #[error("stopping time has no mass at iteration {0}; support starts at 1")]
    OutOfSupport(u64),
    #[error("invalid stopping time: {0}")]
    InvalidStopping(String),
    #[error("stopping series did not reach tail {tol:e} within {terms} terms")]
    TailNotSummable { tol: f64, terms: usize },
    #[error("stopping time has infinite expectation")]
    InfiniteExpectation,
    #[error("exploration matrix has nonzero diagonal entry at {0} ({1})")]
    DiagonalNotNull(usize, f64),
    #[error("time-weighted normalizer is zero")]
    ZeroNormalizer,
    #[error("proposal and incumbent are the same alternative ({0})")]
    SamePair(usize),
    #[error("invalid model parameters: {0}")]
    InvalidParams(String),
    #[error("every trial for pair (proposal {0}, incumbent {1}) was censored")]
    AllCensored(usize, usize),
    #[error("deadline must be positive, got {0}")]
    NonPositiveDeadline(f64),
    #[error("{0}")]
    Precondition(String),
    #[error("i/o error on {path}: {source}")]
    Io {
        path: String,
        #[source]
        source: std::io::Error,
    },
    #[error("parse error: {0}")]
    Parse(String),
}

impl Error {
    pub fn class(&self) -> ErrorClass {
        match self {
            Error::NotErgodic(_)
            | Error::NotReversible(_)
            | Error::Singular
            | Error::Eigen(_)
            | Error::TailNotSummable { .. }
            | Error::ZeroNormalizer
            | Error::AllCensored(..) => ErrorClass::Numerical,
            _ => ErrorClass::Validation,
        }
    }

    /// Short machine-readable tag, stable across releases.
    pub fn code(&self) -> &'static str {
        match self {
            Error::NonSquare { .. } => "NonSquare",
            Error::MenuTooSmall(_) => "MenuTooSmall",
            Error::EntryOutOfRange(..) => "EntryOutOfRange",
            Error::NotPositive(..) => "NotPositive",
            Error::NotTransitive(_) => "NotTransitive",
            Error::InvalidDistribution(_) => "InvalidDistribution",
            Error::InvalidSymmetricWeight(..) => "InvalidSymmetricWeight",
            Error::DimensionMismatch { .. } => "DimensionMismatch",
            Error::ColumnNotStochastic(..) => "ColumnNotStochastic",
            Error::NegativeEntry(..) => "NegativeEntry",
            Error::NotErgodic(_) => "NotErgodic",
            Error::NotReversible(_) => "NotReversible",
            Error::Singular => "Singular",
            Error::Eigen(_) => "Eigen",
            Error::OutOfSupport(_) => "OutOfSupport",
            Error::InvalidStopping(_) => "InvalidStopping",
            Error::TailNotSummable { .. } => "TailNotSummable",
            Error::InfiniteExpectation => "InfiniteExpectation",
            Error::DiagonalNotNull(..) => "DiagonalNotNull",
            Error::ZeroNormalizer => "ZeroNormalizer",
            Error::SamePair(_) => "SamePair",
            Error::InvalidParams(_) => "InvalidParams",
            Error::AllCensored(..) => "AllCensored",
            Error::NonPositiveDeadline(_) => "NonPositiveDeadline",
            Error::Precondition(_) => "Precondition",
            Error::Io { .. } => "Io",
            Error::Parse(_) => "Parse",
        }
    }
}

pub type Result<T> = std::result::Result<T, Error>;
