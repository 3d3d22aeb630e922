//! Statistics kernels, generic over [`Scalar`](crate::Scalar).

mod chow;
mod lof;
mod ols;
pub mod special;

pub use chow::{chow_f_test, FTestResult, K_PARAMS};
pub use lof::{lof_scores, lof_scores_brute_force, remove_outliers, standardize, OutlierSplit};
pub use ols::{fit_ols, fit_sufficient, RegressionModel, SuffStats};

#[derive(Debug, Clone, PartialEq, thiserror::Error)]
pub enum StatsError {
    #[error("x has {x} values but y has {y}")]
    LengthMismatch { x: usize, y: usize },
    #[error("need at least {min} observations, got {n}")]
    TooFewPoints { n: usize, min: usize },
    #[error("x has zero variance; slope undefined")]
    ZeroVariance,
    #[error("non-finite value at index {0}")]
    NonFinite(usize),
    #[error("LOF needs n > k >= 1, got n = {n}, k = {k}")]
    BadNeighbourCount { n: usize, k: usize },
    #[error("points must share one dimension; row {row} has {got}, expected {expected}")]
    RaggedPoints { row: usize, got: usize, expected: usize },
    #[error("fraction must be in [0, 1), got {0}")]
    BadFraction(f64),
    #[error("alpha must be in (0, 1), got {0}")]
    BadAlpha(f64),
}
