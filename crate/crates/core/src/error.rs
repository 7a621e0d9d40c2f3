use thiserror::Error;

/// Every failure mode of the library.
#[derive(Debug, Clone, PartialEq, Eq, Error)]
pub enum MvError {
    #[error("domain error: {0}")]
    DomainError(String),
    #[error("polynomial is not squarefree: {0}")]
    NonSquarefree(String),
    #[error("point counting needs residue field F_q, got {0}")]
    BaseFieldMismatch(String),
    #[error("coefficient is not in A+: {0}")]
    NegativeCoefficient(String),
    #[error("divergent sum: {0}")]
    Divergent(String),
    #[error("unsupported: {0}")]
    Unsupported(String),
    #[error("precision loss: value not determined by stored digits")]
    PrecisionLoss,
    #[error("root refinement did not terminate within depth {0}")]
    UnsupportedRamification(usize),
    #[error("syntax error at line {line}, column {col}: {msg}")]
    Syntax { line: usize, col: usize, msg: String },
    #[error("set is not contained in an affine subspace of dimension {0}")]
    NotAffine(usize),
    #[error("witness map is not surjective: {0} has empty fibre")]
    NotSurjective(String),
    #[error("witness value for {0} is not nonnegative")]
    NegativePhi(String),
    #[error("truncation depth too small, need at least {required}")]
    DepthTooSmall { required: i64 },
    #[error("ball descent exceeded depth {0}")]
    DepthExceeded(usize),
    #[error("no certificate decides this ball")]
    Uncertified,
    #[error("hypothesis failed: {0}")]
    HypothesisFailed(String),
    #[error("inconclusive: {0}")]
    Inconclusive(String),
    #[error("{0}")]
    Usage(String),
}

impl MvError {
    /// Stable machine-readable tag.
    pub fn kind(&self) -> &'static str {
        match self {
            MvError::DomainError(_) => "DomainError",
            MvError::NonSquarefree(_) => "NonSquarefree",
            MvError::BaseFieldMismatch(_) => "BaseFieldMismatch",
            MvError::NegativeCoefficient(_) => "NegativeCoefficient",
            MvError::Divergent(_) => "Divergent",
            MvError::Unsupported(_) => "Unsupported",
            MvError::PrecisionLoss => "PrecisionLoss",
            MvError::UnsupportedRamification(_) => "UnsupportedRamification",
            MvError::Syntax { .. } => "SyntaxError",
            MvError::NotAffine(_) => "NotAffine",
            MvError::NotSurjective(_) => "NotSurjective",
            MvError::NegativePhi(_) => "NegativePhi",
            MvError::DepthTooSmall { .. } => "DepthTooSmall",
            MvError::DepthExceeded(_) => "DepthExceeded",
            MvError::Uncertified => "Uncertified",
            MvError::HypothesisFailed(_) => "HypothesisFailed",
            MvError::Inconclusive(_) => "Inconclusive",
            MvError::Usage(_) => "UsageError",
        }
    }
}

pub type Result<T> = std::result::Result<T, MvError>;

pub fn unsupported<T>(msg: impl Into<String>) -> Result<T> {
    Err(MvError::Unsupported(msg.into()))
}
