use thiserror::Error;

use crate::detectors::Scheme;

/// Errors produced by the detection library.
#[derive(Debug, Error, Clone, PartialEq)]
pub enum Error {
    #[error("invalid parameter: {0}")]
    InvalidParameter(String),

    #[error("observation batch uses {found:?} reporting but {expected:?} was required")]
    SchemeMismatch { expected: Scheme, found: Scheme },

    #[error("exact enumeration over {sensors} sensors exceeds the cap of {cap}")]
    EnumerationCap { sensors: usize, cap: usize },

    #[error("local statistic is -inf for every count; the decision region is degenerate")]
    DegenerateStatistic,

    #[error("no threshold reaches false-alarm target {target}; best achievable is {best}")]
    Infeasible { target: f64, best: f64 },

    #[error("Chernoff sum diverges at s = {s}")]
    DivergentExponent { s: f64 },
}

pub type Result<T> = std::result::Result<T, Error>;

pub(crate) fn invalid(msg: impl Into<String>) -> Error {
    Error::InvalidParameter(msg.into())
}
