use thiserror::Error;

pub type Result<T> = std::result::Result<T, Error>;

#[derive(Debug, Clone, PartialEq, Error)]
pub enum Error {
    #[error("matrix too small: {n} rows x {p} columns")]
    EmptyMatrix { n: usize, p: usize },
    #[error("data matrix is not mean-centered")]
    NotCentered,
    #[error("matrix is identically zero")]
    ZeroMatrix,
    #[error("dimension {p} exceeds the dense eigensolver limit of {max}")]
    DimensionTooLarge { p: usize, max: usize },
    #[error("index {index} out of range for dimension {len}")]
    IndexOutOfRange { index: usize, len: usize },
    #[error("vector norm {norm} is not 1")]
    NormViolation { norm: f64 },
    #[error("dimension mismatch: expected {expected}, found {found}")]
    DimensionMismatch { expected: usize, found: usize },
    #[error("matrix is not symmetric (max asymmetry {asymmetry:e})")]
    NotSymmetric { asymmetry: f64 },
    #[error("eigenvalue {index} is not separated from the rest of the spectrum (gap {gap:e})")]
    DegenerateSpectrum { index: usize, gap: f64 },
    #[error("leading eigenvalue {0} is not positive")]
    NonPositiveEigenvalue(f64),
    #[error("power iteration collapsed to the zero vector")]
    PowerIterationDegenerate,
    #[error("rank exhausted: only {produced} of {requested} components could be extracted")]
    RankExhausted { produced: usize, requested: usize },
    #[error("truncation to {k} loadings produced the zero vector")]
    ZeroAfterTruncation { k: usize },
    #[error("invalid parameter: {0}")]
    InvalidParameter(String),
    #[error("cannot split {n} samples into {nfolds} folds")]
    TooFewSamples { n: usize, nfolds: usize },
    #[error("every cross-validation candidate failed")]
    AllCellsFailed,
    #[error("invalid block structure: {0}")]
    InvalidBlock(String),
    #[error("covariance is not positive semidefinite (pivot {pivot:e} at index {index})")]
    NotPositiveDefinite { pivot: f64, index: usize },
    #[error("metric undefined: {0}")]
    UndefinedMetric(String),
}

impl Error {
    /// Stable variant name, used by the CLI on stderr.
    pub fn name(&self) -> &'static str {
        match self {
            Error::EmptyMatrix { .. } => "EmptyMatrix",
            Error::NotCentered => "NotCentered",
            Error::ZeroMatrix => "ZeroMatrix",
            Error::DimensionTooLarge { .. } => "DimensionTooLarge",
            Error::IndexOutOfRange { .. } => "IndexOutOfRange",
            Error::NormViolation { .. } => "NormViolation",
            Error::DimensionMismatch { .. } => "DimensionMismatch",
            Error::NotSymmetric { .. } => "NotSymmetric",
            Error::DegenerateSpectrum { .. } => "DegenerateSpectrum",
            Error::NonPositiveEigenvalue(_) => "NonPositiveEigenvalue",
            Error::PowerIterationDegenerate => "PowerIterationDegenerate",
            Error::RankExhausted { .. } => "RankExhausted",
            Error::ZeroAfterTruncation { .. } => "ZeroAfterTruncation",
            Error::InvalidParameter(_) => "InvalidParameter",
            Error::TooFewSamples { .. } => "TooFewSamples",
            Error::AllCellsFailed => "AllCellsFailed",
            Error::InvalidBlock(_) => "InvalidBlock",
            Error::NotPositiveDefinite { .. } => "NotPositiveDefinite",
            Error::UndefinedMetric(_) => "UndefinedMetric",
        }
    }
}
