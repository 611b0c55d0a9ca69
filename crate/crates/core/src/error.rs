use thiserror::Error;

use crate::params::Cap;

pub type Result<T, E = Error> = std::result::Result<T, E>;

#[derive(Debug, Error)]
pub enum Error {
    #[error("missing parameter `{0}`")]
    MissingParam(&'static str),

    #[error("invalid value for `{key}`: {reason}")]
    InvalidParam { key: &'static str, reason: String },

    #[error("`a`/`mu`/`b`: model requires a < mu < b (got a={a}, mu={mu}, b={b})")]
    OrderViolation { a: i64, mu: i64, b: Cap },

    #[error("`n_max`: truncation {n_max} too small, need at least {required}")]
    TruncationTooSmall { n_max: usize, required: usize },

    #[error("distribution is not normalized (total mass {total})")]
    NotNormalized { total: f64 },

    #[error("distribution mean {actual} differs from mu={expected}")]
    MeanMismatch { expected: f64, actual: f64 },

    #[error("negative mass {value} at n={index} (time step too large?)")]
    NegativeMass { index: usize, value: f64 },

    #[error("mass {tail} accumulated at the truncation boundary")]
    TailOverflow { tail: f64 },

    #[error("vectors have different lengths ({left} vs {right})")]
    LengthMismatch { left: usize, right: usize },

    #[error("cannot repair sampled total {total} to target {target}")]
    InfeasibleRepair { total: u64, target: u64 },

    #[error("no eligible giver/receiver pair: state is frozen")]
    FrozenState,

    #[error("exponential moment overflows f64")]
    Overflow,

    #[error("root bracketing failed for the common ratio: {0}")]
    BracketFailure(String),

    #[error("initial datum has no finite exponential moment")]
    InadmissibleInitial,

    #[error("Gini index undefined for a distribution with zero mean")]
    ZeroMean,

    #[error("{0} requires a finite wealth cap b")]
    UnboundedCap(&'static str),

    #[error("invariant violated: {0}")]
    InvariantViolation(String),

    #[error("malformed input: {0}")]
    Parse(String),

    #[error(transparent)]
    Io(#[from] std::io::Error),

    #[error(transparent)]
    Csv(#[from] csv::Error),
}

impl Error {
    /// True for errors caused by bad user input rather than a failed run.
    pub fn is_validation(&self) -> bool {
        matches!(
            self,
            Error::MissingParam(_)
                | Error::InvalidParam { .. }
                | Error::OrderViolation { .. }
                | Error::TruncationTooSmall { .. }
                | Error::NotNormalized { .. }
                | Error::MeanMismatch { .. }
                | Error::UnboundedCap(_)
                | Error::Parse(_)
        )
    }
}
