use std::path::PathBuf;

use thiserror::Error;

/// Violations of a physical or mathematical precondition.
#[derive(Debug, Clone, PartialEq, Error)]
pub enum DomainError {
    #[error("{quantity} must be {requirement}, got {value}")]
    OutOfDomain {
        quantity: &'static str,
        requirement: &'static str,
        value: f64,
    },
    #[error("field {field} G sits on the pole of the resonance at {position} G")]
    Pole { field: f64, position: f64 },
    #[error("time {t} s is outside the schedule range [0, {end}] s")]
    TimeOutOfRange { t: f64, end: f64 },
    #[error("trap has zero depth")]
    Untrapped,
    #[error("truncation parameter η = {eta:.3} is below the floor {floor}")]
    TooShallow { eta: f64, floor: f64 },
    #[error("final atom number {n} is not below the initial number {n0}")]
    NoAtomLoss { n: f64, n0: f64 },
    #[error("{0}")]
    Invalid(String),
}

impl DomainError {
    pub(crate) fn check_positive(quantity: &'static str, value: f64) -> Result<f64, Self> {
        if value > 0.0 && value.is_finite() {
            Ok(value)
        } else {
            Err(Self::OutOfDomain {
                quantity,
                requirement: "positive and finite",
                value,
            })
        }
    }

    pub(crate) fn check_non_negative(quantity: &'static str, value: f64) -> Result<f64, Self> {
        if value >= 0.0 && value.is_finite() {
            Ok(value)
        } else {
            Err(Self::OutOfDomain {
                quantity,
                requirement: "non-negative and finite",
                value,
            })
        }
    }
}

/// Top-level error used by the orchestration layer and the CLI.
#[derive(Debug, Error)]
pub enum Error {
    #[error(transparent)]
    Domain(#[from] DomainError),
    #[error("configuration error: {0}")]
    Config(String),
    #[error("I/O error on {path}: {source}")]
    Io {
        path: PathBuf,
        #[source]
        source: std::io::Error,
    },
    #[error(transparent)]
    Fit(#[from] crate::imaging::FitError),
    #[error(transparent)]
    Gp(#[from] crate::gp::GpError),
    #[error("simulation lost the cloud: {0}")]
    LostCloud(String),
    #[error("no condensed initial state: {0}")]
    NotCondensed(String),
    #[error("refusing to resume: {0}")]
    ResumeMismatch(String),
    #[error("{0}")]
    Usage(String),
}

/// Process exit codes.
pub mod exit {
    pub const OK: i32 = 0;
    pub const IO: i32 = 1;
    pub const CONFIG: i32 = 2;
    pub const PHYSICS: i32 = 3;
    pub const FIT: i32 = 4;
    pub const RESUME_MISMATCH: i32 = 5;
    pub const PLATEAU: i32 = 6;
}

impl Error {
    pub fn exit_code(&self) -> i32 {
        use crate::imaging::FitError;
        match self {
            Error::Io { .. } => exit::IO,
            Error::Config(_) | Error::Usage(_) => exit::CONFIG,
            Error::Domain(_) | Error::LostCloud(_) | Error::NotCondensed(_) | Error::Gp(_) => exit::PHYSICS,
            Error::Fit(FitError::Plateau { .. }) => exit::PLATEAU,
            Error::Fit(_) => exit::FIT,
            Error::ResumeMismatch(_) => exit::RESUME_MISMATCH,
        }
    }

    pub fn io(path: impl Into<PathBuf>, source: std::io::Error) -> Self {
        Self::Io {
            path: path.into(),
            source,
        }
    }
}

pub type Result<T, E = Error> = std::result::Result<T, E>;
