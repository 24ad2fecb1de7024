use thiserror::Error;

pub type Result<T, E = Error> = std::result::Result<T, E>;

#[derive(Debug, Clone, PartialEq, Error)]
pub enum Error {
    #[error("dimension mismatch in {what}: expected {expected}, found {found}")]
    DimensionMismatch {
        what: &'static str,
        expected: usize,
        found: usize,
    },

    #[error("component count must be at least 1")]
    EmptySpec,

    #[error("sigma_db[{index}] = {value} must be finite and > 0")]
    InvalidSigma { index: usize, value: f64 },

    #[error("mu_db[{index}] = {value} must be finite")]
    InvalidMean { index: usize, value: f64 },

    #[error("invalid correlation matrix: {0}")]
    InvalidCorrelation(String),

    #[error("NonPositiveDefinite: covariance matrix is not positive definite")]
    NonPositiveDefinite,

    #[error("SingularMatrix: {0} could not be inverted")]
    SingularMatrix(&'static str),

    #[error("EmptyReducedSet: every precision-matrix row sum is zero")]
    EmptyReducedSet,

    #[error("sum of reduced precision row sums is {0}, expected > 0")]
    NonPositiveTailSum(f64),

    #[error("domain error: {what} = {value} is out of range")]
    Domain { what: &'static str, value: f64 },

    #[error("invalid parameter: {0}")]
    InvalidParameter(String),

    #[error("Overflow: moment term for components ({i}, {j}) exceeds the f64 range")]
    Overflow { i: usize, j: usize },

    #[error("Overflow: {0} exceeds the f64 range")]
    MomentOverflow(&'static str),

    #[error("NoRoot: target ratio {target} lies below the lambda = 0 value {floor}")]
    NoRoot { target: f64, floor: f64 },

    #[error("NonConvergence: root finder did not converge after {iterations} iterations")]
    NonConvergence { iterations: usize },
}

impl Error {
    /// Errors caused by the problem statement rather than by numerics.
    pub fn is_input_error(&self) -> bool {
        matches!(
            self,
            Error::DimensionMismatch { .. }
                | Error::EmptySpec
                | Error::InvalidSigma { .. }
                | Error::InvalidMean { .. }
                | Error::InvalidCorrelation(_)
                | Error::NonPositiveDefinite
                | Error::Domain { .. }
                | Error::InvalidParameter(_)
        )
    }

    pub(crate) fn domain(what: &'static str, value: f64) -> Self {
        Error::Domain { what, value }
    }
}
