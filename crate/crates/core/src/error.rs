use thiserror::Error;

/// Errors raised while loading data or estimating effects.
#[derive(Debug, Error)]
pub enum RdError {
    #[error("i/o error on {path}: {source}")]
    Io {
        path: String,
        #[source]
        source: std::io::Error,
    },
    #[error("malformed delimited input: {0}")]
    Csv(String),
    #[error("missing column `{0}`")]
    MissingColumn(String),
    #[error("non-numeric value {value:?} at row {row}, column `{column}`")]
    Parse {
        row: usize,
        column: String,
        value: String,
    },
    #[error("dataset is empty after dropping rows with missing values")]
    EmptyDataset,
    #[error("unsupported option `{0}`")]
    UnsupportedOption(String),
    #[error("invalid value {value:?} for option `{option}`: {reason}")]
    InvalidOption {
        option: String,
        value: String,
        reason: String,
    },
    #[error("dimension mismatch: {0}")]
    Dimension(String),
    #[error("invalid input: {0}")]
    Invalid(String),
    #[error("data consistency error: {0}")]
    Inconsistent(String),

    #[error("insufficient observations on the {side} side: {found} found, {needed} needed")]
    InsufficientObservations {
        side: &'static str,
        found: usize,
        needed: usize,
    },
    #[error("collinear design on the {side} side (rank-deficient polynomial basis)")]
    Collinear { side: &'static str },
    #[error("no observations inside the window [-{lower}, {upper}]")]
    EmptyWindow { lower: f64, upper: f64 },
    #[error("one-sided support: {0}")]
    OneSidedSupport(String),
    #[error("zero variance with nonzero contrast value {0}")]
    ZeroVariance(f64),
    #[error("estimation failed at {label}: {source}")]
    At {
        label: String,
        #[source]
        source: Box<RdError>,
    },
}

impl RdError {
    /// `true` for input and option problems, `false` for failures of the
    /// estimators themselves.
    pub fn is_validation(&self) -> bool {
        match self {
            RdError::Io { .. }
            | RdError::Csv(_)
            | RdError::MissingColumn(_)
            | RdError::Parse { .. }
            | RdError::EmptyDataset
            | RdError::UnsupportedOption(_)
            | RdError::InvalidOption { .. }
            | RdError::Dimension(_)
            | RdError::Invalid(_)
            | RdError::Inconsistent(_) => true,
            RdError::At { source, .. } => source.is_validation(),
            _ => false,
        }
    }

    pub(crate) fn at(label: impl Into<String>, source: RdError) -> Self {
        RdError::At {
            label: label.into(),
            source: Box::new(source),
        }
    }
}

pub type Result<T> = std::result::Result<T, RdError>;
