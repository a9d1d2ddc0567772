use thiserror::Error;

pub type Result<T, E = Error> = std::result::Result<T, E>;

#[derive(Debug, Error)]
pub enum Error {
    #[error("invalid class count {c}: need at least {min}")]
    InvalidClassCount { c: usize, min: usize },

    #[error("invalid sparsity k={k}: must lie in [1, {max}]")]
    InvalidSparsity { k: usize, max: usize },

    #[error("row {row} has zero total and no smoothing; its distribution is undefined")]
    UndefinedRow { row: usize },

    #[error(
        "singular transition matrix (condition estimate {condition:.3e}); \
         URE needs Q^-1, use FWD or CPE instead"
    )]
    SingularTransition { condition: f64 },

    #[error("shape mismatch: expected {expected}, found {found}")]
    Shape { expected: String, found: String },

    #[error("Fano bound needs C >= 3 so that log2(C-1) > 0, got C={c}")]
    DegenerateDenominator { c: usize },

    #[error("invalid argument: {0}")]
    InvalidArgument(String),

    #[error("invalid transition matrix: {0}")]
    InvalidMatrix(String),

    #[error("parse error: {0}")]
    Parse(String),

    #[error(transparent)]
    Io(#[from] std::io::Error),

    #[error(transparent)]
    Csv(#[from] csv::Error),

    #[error(transparent)]
    Json(#[from] serde_json::Error),
}

impl Error {
    pub(crate) fn shape(expected: impl ToString, found: impl ToString) -> Self {
        Error::Shape {
            expected: expected.to_string(),
            found: found.to_string(),
        }
    }

    pub(crate) fn invalid(msg: impl Into<String>) -> Self {
        Error::InvalidArgument(msg.into())
    }

    /// Short stable name, used where a failure is recorded rather than raised.
    pub fn kind(&self) -> &'static str {
        match self {
            Error::InvalidClassCount { .. } => "invalid-class-count",
            Error::InvalidSparsity { .. } => "invalid-sparsity",
            Error::UndefinedRow { .. } => "undefined-row",
            Error::SingularTransition { .. } => "singular-transition",
            Error::Shape { .. } => "shape-error",
            Error::DegenerateDenominator { .. } => "degenerate-denominator",
            Error::InvalidArgument(_) => "invalid-argument",
            Error::InvalidMatrix(_) => "invalid-matrix",
            Error::Parse(_) | Error::Json(_) | Error::Csv(_) => "parse-error",
            Error::Io(_) => "io-error",
        }
    }

    /// Errors caused by bad user input rather than a failing computation.
    pub fn is_usage(&self) -> bool {
        matches!(
            self,
            Error::InvalidClassCount { .. }
                | Error::InvalidSparsity { .. }
                | Error::InvalidArgument(_)
                | Error::InvalidMatrix(_)
                | Error::Parse(_)
                | Error::Json(_)
                | Error::Csv(_)
                | Error::Shape { .. }
                | Error::DegenerateDenominator { .. }
        )
    }
}
