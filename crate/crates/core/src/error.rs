use thiserror::Error;

#[derive(Debug, Error, Clone, PartialEq)]
pub enum Error {
    #[error("invalid parameter: {0}")]
    InvalidParameter(String),

    #[error("inconsistent horizon: T = {horizon} s is not N·delta with N = {intervals}, delta = {delta} s")]
    InconsistentHorizon {
        horizon: f64,
        delta: f64,
        intervals: usize,
    },

    #[error("certification failed: {0}")]
    CertificationFailed(String),

    #[error("numerical breakdown: {0}")]
    NumericalBreakdown(String),
}

pub type Result<T, E = Error> = std::result::Result<T, E>;
