use thiserror::Error;

use crate::model::ValidationReport;

pub type Result<T> = std::result::Result<T, Error>;

#[derive(Debug, Error)]
pub enum Error {
    #[error("invalid argument: {0}")]
    InvalidArgument(String),

    #[error("configuration violates the standing hypotheses:\n{0}")]
    Hypothesis(ValidationReport),

    #[error("CFL violation: dt = {dt:e} exceeds the limit {limit:e} ({reason})")]
    Cfl { dt: f64, limit: f64, reason: &'static str },

    #[error("inconsistent history: |omega(x, 0)| = {0:e} is not zero")]
    InconsistentHistory(f64),

    #[error("linear solve failed: {0}")]
    Singular(String),

    #[error("lambda = {lambda} is outside the resolved band (lambda * dx = {product:.3} > {limit})")]
    Unresolved { lambda: f64, product: f64, limit: f64 },

    #[error("insufficient data: {0}")]
    InsufficientData(String),

    #[error("eigensolver failed: {0}")]
    Eigen(String),
}
