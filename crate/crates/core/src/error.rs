//! Error type shared across the estimation pipeline.

use crate::sample::Arm;
use thiserror::Error;

#[derive(Debug, Error)]
pub enum Error {
    #[error("invalid parameter: {0}")]
    InvalidParameter(String),

    #[error("probability level {0} must lie strictly inside (0, 1)")]
    LevelOutOfRange(f64),

    #[error("covariate row has {got} entries, expected {expected}")]
    ShapeMismatch { expected: usize, got: usize },

    #[error("design matrix is rank deficient ({rank} of {cols} columns independent)")]
    RankDeficient { rank: usize, cols: usize },

    #[error("separation detected in logistic fit (coefficient of {term} diverges)")]
    Separation { term: String },

    #[error("logistic fit did not reach gradient norm {tol:e} within {max_iter} iterations")]
    NonConvergence { tol: f64, max_iter: usize },

    #[error("leave-one-out selection guard violated: {0}")]
    LoocvGuard(String),

    #[error("all quantile weights are zero")]
    DegenerateWeights,

    #[error("no observations in the {arm} arm")]
    EmptyArm { arm: Arm },

    #[error("intermediate quantile {0} must be positive for log-scale tail estimation")]
    NonPositiveThreshold(f64),

    #[error("no exceedances above the intermediate quantile in the {arm} arm")]
    NoExceedances { arm: Arm },

    #[error("degenerate quantile spacings ({upper}, {lower}); tail level too extreme for the sample")]
    DegenerateSpacings { upper: f64, lower: f64 },

    #[error("extreme level p = {p} must lie below the intermediate tail mass {tau}")]
    LevelOrdering { p: f64, tau: f64 },

    #[error("both extrapolated quantiles nonpositive (Q1 = {q1}, Q0 = {q0}); normalization undefined")]
    Normalization { q1: f64, q0: f64 },

    #[error("quantile ratio must be positive, got {0}")]
    NonPositiveKappa(f64),

    #[error("plug-in variance estimate is negative ({0}); covariance indefinite at this sample")]
    IndefiniteCovariance(f64),

    #[error("{dropped} of {total} bootstrap replicates failed; interval unreliable")]
    BootstrapUnreliable { dropped: usize, total: usize },

    #[error("unsupported method: {0}")]
    UnsupportedMethod(String),
}

pub type Result<T> = std::result::Result<T, Error>;
