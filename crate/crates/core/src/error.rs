use std::path::PathBuf;

use thiserror::Error;

pub type Result<T> = std::result::Result<T, Error>;

#[derive(Debug, Error)]
pub enum Error {
    #[error("i/o error on {path}: {source}")]
    Io {
        path: PathBuf,
        source: std::io::Error,
    },

    #[error("cannot decode {path}: {reason}")]
    BadImage { path: PathBuf, reason: String },

    #[error("dimension mismatch: {0}")]
    DimensionMismatch(String),

    #[error("intensity {0} outside [0, 1]")]
    IntensityOutOfRange(f64),

    #[error("blend region is empty")]
    EmptyOmega,

    #[error("blend region touches the raster border after placement")]
    OmegaTouchesBorder,

    #[error("non-finite value encountered in solver")]
    NonFinite,

    #[error("no valid placement found after {0} retries")]
    PlacementFailed(u32),

    #[error("no eligible target images for class {0}")]
    NoEligibleTargets(String),

    #[error("malformed manifest {path}: {reason}")]
    Manifest { path: PathBuf, reason: String },

    #[error("image id sets do not match: {0}")]
    IdMismatch(String),

    #[error("output {0} already exists (pass --force to overwrite)")]
    OutputExists(PathBuf),

    #[error("{0}")]
    InvalidArgument(String),
}

impl Error {
    pub fn io(path: impl Into<PathBuf>, source: std::io::Error) -> Self {
        Error::Io {
            path: path.into(),
            source,
        }
    }
}
