use thiserror::Error;

#[derive(Debug, Error, Clone, PartialEq)]
pub enum Error {
    #[error("shape mismatch: expected {expected}, found {found}")]
    Shape { expected: String, found: String },

    #[error("non-finite entries in {0}")]
    NonFinite(&'static str),

    #[error("matrix is not symmetric (max |a_ij - a_ji| = {0:e})")]
    NotSymmetric(f64),

    #[error("decomposition failed: {0}")]
    Decomposition(&'static str),

    #[error(
        "(x, u) is not a subgradient pair: prox fixed-point residual {residual:e} exceeds {threshold:e}"
    )]
    InvalidSubgradient { residual: f64, threshold: f64 },

    #[error(
        "KKT candidate rejected: stationarity residual {stationarity:e}, subgradient residual {subgradient:e}, threshold {threshold:e}"
    )]
    InvalidKkt {
        stationarity: f64,
        subgradient: f64,
        threshold: f64,
    },

    #[error("direction lies outside the range of the canonical Jacobian element (residual {residual:e} > {threshold:e})")]
    OutsideRange { residual: f64, threshold: f64 },

    #[error("operator dimension {dim} exceeds cap {cap}")]
    DimensionCap { dim: usize, cap: usize },

    #[error("invalid argument: {0}")]
    InvalidArgument(String),

    #[error("problem input `{key}`: {message}")]
    Input { key: String, message: String },
}

impl Error {
    /// Errors caused by the caller's data rather than by a numerical failure.
    pub fn is_input_error(&self) -> bool {
        !matches!(self, Error::Decomposition(_))
    }
}

pub type Result<T> = std::result::Result<T, Error>;

pub(crate) fn input_err(key: impl Into<String>, message: impl Into<String>) -> Error {
    Error::Input {
        key: key.into(),
        message: message.into(),
    }
}

pub(crate) fn shape_err(expected: impl Into<String>, found: impl Into<String>) -> Error {
    Error::Shape {
        expected: expected.into(),
        found: found.into(),
    }
}
