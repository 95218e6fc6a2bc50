use std::path::PathBuf;

use thiserror::Error;

/// Errors raised anywhere in the crate.
#[derive(Debug, Error)]
pub enum Error {
    #[error("{0} is not a sum of two squares; no torus eigenvalue 4π²·{0}")]
    NotRepresentable(u64),

    #[error("Hermite order {order} exceeds the supported maximum of {max}")]
    OrderTooLarge { order: usize, max: usize },

    #[error("argument outside the domain: {0}")]
    Domain(String),

    #[error("alpha coefficient indices must be even, got ({0}, {1})")]
    OddIndex(u32, u32),

    #[error("spectral measure of n = {0} has |mu4| = 1; kappa_4 vanishes and the EPC standardisation is undefined")]
    EpcDegenerate(u64),

    #[error("grid resolution {got} is below the minimum {min} needed to resolve the field bandwidth")]
    ResolutionTooLow { got: usize, min: usize },

    #[error("polar exclusion (theta < {theta_min}) removed every latitude row")]
    PolarExclusion { theta_min: f64 },

    #[error("chaos order {0} is not supported for this functional")]
    OrderNotSupported(usize),

    #[error("invalid configuration: {0}")]
    InvalidConfig(String),

    #[error("malformed record: {0}")]
    MalformedRecord(String),

    #[error("I/O failure on {path}: {source}")]
    Io {
        path: PathBuf,
        #[source]
        source: std::io::Error,
    },
}

impl Error {
    pub(crate) fn io(path: impl Into<PathBuf>, source: std::io::Error) -> Self {
        Error::Io {
            path: path.into(),
            source,
        }
    }
}

pub type Result<T> = std::result::Result<T, Error>;
