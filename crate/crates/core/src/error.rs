use thiserror::Error;

use crate::fock::Parity;

pub type Result<T> = std::result::Result<T, Error>;

/// Broad classes of failure, used by the command-line driver to pick an
/// exit code.
#[derive(Debug, Clone, Copy, PartialEq, Eq)]
pub enum ErrorKind {
    Domain,
    Numerical,
    Io,
}

impl ErrorKind {
    pub fn as_str(self) -> &'static str {
        match self {
            ErrorKind::Domain => "domain",
            ErrorKind::Numerical => "numerical",
            ErrorKind::Io => "io",
        }
    }
}

#[derive(Debug, Error)]
pub enum Error {
    #[error("no {parity} sector state exists at harmonic resolution {k}")]
    InvalidSector { k: u32, parity: Parity },

    #[error("invalid Fock state: {0}")]
    InvalidState(String),

    #[error("operator word is not normal-ordered: {0}")]
    NotNormalOrdered(String),

    #[error("invalid model parameters: {0}")]
    InvalidParams(String),

    #[error("cutoff {cutoff} is below the harmonic resolution {k} of the requested sector")]
    CutoffBelowResolution { cutoff: u32, k: u32 },

    #[error("matrix is not Hermitian (max deviation {0:.3e})")]
    NotHermitian(f64),

    #[error("matrix is not unitary (max deviation {0:.3e})")]
    NotUnitary(f64),

    #[error("eigenvalue {re:.12}{im:+.12}i lies on the branch cut of the principal logarithm")]
    BranchCut { re: f64, im: f64 },

    #[error("basis mismatch: expected sector ({expected}), found ({found})")]
    BasisMismatch { expected: String, found: String },

    #[error("image state {state} has the target resolution and parity but is missing from the target basis")]
    MissingImage { state: String },

    #[error("connector source and target are the same state {0}")]
    DegenerateConnector(String),

    #[error("states {from} and {to} do not share harmonic resolution and parity")]
    IncompatibleStates { from: String, to: String },

    #[error("cluster fit failed: no solvable ansatz up to r_max = {r_max} ({part} part)")]
    FitFailure { r_max: u32, part: &'static str },

    #[error("eigenstate index {index} out of range at K = {k} (only {available} states)")]
    IndexOutOfRange { k: u32, index: usize, available: usize },

    #[error("prepared state has vanishing norm {0:.3e}")]
    DegenerateState(f64),

    #[error("spectrum needs at least 2 uniformly spaced samples, got {0}")]
    TooFewSamples(usize),

    #[error("parse error: {0}")]
    Parse(String),

    #[error(transparent)]
    Io(#[from] std::io::Error),

    #[error(transparent)]
    Json(#[from] serde_json::Error),

    #[error(transparent)]
    Csv(#[from] csv::Error),
}

impl Error {
    pub fn kind(&self) -> ErrorKind {
        match self {
            Error::BranchCut { .. }
            | Error::FitFailure { .. }
            | Error::DegenerateState(_)
            | Error::MissingImage { .. } => ErrorKind::Numerical,
            Error::Io(_) | Error::Csv(_) => ErrorKind::Io,
            _ => ErrorKind::Domain,
        }
    }
}
