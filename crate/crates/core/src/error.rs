use thiserror::Error;

use crate::diagnostics::CompatReport;

pub type Result<T> = std::result::Result<T, Error>;

#[derive(Debug, Clone, Error)]
pub enum Error {
    #[error("invalid argument: {0}")]
    InvalidArgument(String),

    /// Iterative or direct solve that did not produce a usable answer.
    #[error("numerical failure: {what}")]
    NumericalFailure {
        what: String,
        /// Last iterate of the quantity being sought, when there is one.
        last_iterate: Option<f64>,
        /// Residual (or change) history of the iteration.
        trace: Vec<f64>,
    },

    #[error("degeneracy: 1 - 2ku = {value:.6e} at node {node} (x = {position:?}) at t = {t}")]
    Degeneracy {
        t: f64,
        node: usize,
        position: Vec<f64>,
        value: f64,
    },

    #[error("truncated tail integral: bound {tail_bound:.3e} exceeds tolerance {tolerance:.3e}; increase t_max")]
    Truncation { tail_bound: f64, tolerance: f64 },

    #[error("no limit: {0}")]
    NoLimit(String),

    #[error("unsupported exponent p = {0} (p = 3/2 is excluded)")]
    UnsupportedExponent(f64),

    #[error("incompatible data: {0:?}")]
    Validation(Box<CompatReport>),

    #[error("study invalid: {reason}")]
    StudyInvalid {
        reason: String,
        /// (refinement parameter, error) rows as measured.
        table: Vec<(f64, f64)>,
    },
}

impl Error {
    pub(crate) fn invalid(msg: impl Into<String>) -> Self {
        Error::InvalidArgument(msg.into())
    }

    pub(crate) fn numerical(msg: impl Into<String>) -> Self {
        Error::NumericalFailure {
            what: msg.into(),
            last_iterate: None,
            trace: Vec::new(),
        }
    }
}
