use thiserror::Error;

pub type Result<T, E = Error> = core::result::Result<T, E>;

#[derive(Debug, Clone, PartialEq, Error)]
pub enum Error {
    #[error("every particle weight is degenerate")]
    AllWeightsDegenerate,

    #[error("particle set is empty")]
    EmptyParticleSet,

    #[error("{particles} particles but {weights} log-weights")]
    WeightCountMismatch { particles: usize, weights: usize },

    #[error("negative birth rate {0}")]
    NegativeRate(f64),

    #[error("assembled covariance is not positive definite")]
    SingularCovariance,

    #[error("brute-force GOSPA supports at most 14 points, got {0}")]
    TooLarge(usize),

    #[error("length mismatch: expected {expected}, found {found}")]
    LengthMismatch { expected: usize, found: usize },

    #[error("measurement dimension {found} does not match model dimension {expected}")]
    DimensionMismatch { expected: usize, found: usize },

    #[error("invalid parameter `{field}`: {reason}")]
    InvalidParameter {
        field: &'static str,
        reason: &'static str,
    },
}

pub(crate) fn ensure(cond: bool, field: &'static str, reason: &'static str) -> Result<()> {
    if cond {
        Ok(())
    } else {
        Err(Error::InvalidParameter { field, reason })
    }
}
