use thiserror::Error;

use crate::phy_model::UserId;

pub type Result<T, E = Error> = std::result::Result<T, E>;

#[derive(Debug, Error)]
pub enum Error {
    #[error("invalid parameter `{name}`: {reason}")]
    InvalidParameter { name: &'static str, reason: String },

    #[error("invalid cancellation context: {0}")]
    InvalidContext(String),

    #[error("no link parameters for user {0}")]
    MissingLink(UserId),

    #[error("SSINR denominator is zero (noise_power must be > 0)")]
    ZeroDenominator,

    #[error("quadrature did not converge: error estimate {estimate:e} exceeds {tolerance:e}")]
    Quadrature { estimate: f64, tolerance: f64 },

    #[error("empty active set")]
    EmptyActiveSet,

    #[error("duplicate address {0}")]
    DuplicateAddress(String),

    #[error("address {address} has {len} bits, expected {expected}")]
    AddressLength { address: String, len: usize, expected: usize },

    #[error("{users} users cannot hold distinct {bits}-bit addresses")]
    TooManyUsers { users: usize, bits: u8 },

    #[error("unknown scenario label `{0}`")]
    UnknownLabel(String),

    #[error("length mismatch: {left} vs {right}")]
    LengthMismatch { left: usize, right: usize },

    #[error("calibration failed: {message} (best max residual {best_residual:.4e})")]
    Calibration { message: String, best_residual: f64 },

    #[error("config error: {0}")]
    Config(String),

    #[error(transparent)]
    Io(#[from] std::io::Error),

    #[error(transparent)]
    Csv(#[from] csv::Error),
}

impl Error {
    pub(crate) fn invalid(name: &'static str, reason: impl Into<String>) -> Self {
        Error::InvalidParameter { name, reason: reason.into() }
    }
}
