use std::path::PathBuf;

use thiserror::Error;

pub type Result<T, E = Error> = std::result::Result<T, E>;

#[derive(Debug, Error)]
pub enum Error {
    #[error("{what} did not converge after {iterations} iterations")]
    Factorization { what: &'static str, iterations: usize },

    #[error("eigenvalue imaginary part {residual:e} exceeds tolerance {tolerance:e}")]
    Spectrum { residual: f64, tolerance: f64 },

    #[error("matrix is not positive definite (pivot {index}); use pi > 0 for rank-deficient inputs")]
    NotPositiveDefinite { index: usize },

    #[error("shared basis is ill-conditioned (condition number {0:e})")]
    IllConditioned(f64),

    #[error("degenerate spectrum: all singular values are zero")]
    DegenerateSpectrum,

    #[error("shape mismatch: {0}")]
    Shape(String),

    #[error("invalid argument: {0}")]
    InvalidArgument(String),

    #[error("matrix contains non-finite values")]
    NonFinite,

    #[error("tensor `{tensor}` is not congruent: {reason}")]
    Congruence { tensor: String, reason: String },

    #[error("tensor `{tensor}`: {source}")]
    InTensor {
        tensor: String,
        #[source]
        source: Box<Error>,
    },

    #[error(transparent)]
    Checkpoint(#[from] CheckpointError),
}

impl Error {
    pub(crate) fn in_tensor(self, tensor: &str) -> Self {
        Error::InTensor {
            tensor: tensor.to_owned(),
            source: Box::new(self),
        }
    }
}

/// Failures while reading or writing a checkpoint directory.
#[derive(Debug, Error)]
pub enum CheckpointError {
    #[error("i/o error at {path}: {source}")]
    Io {
        path: PathBuf,
        #[source]
        source: std::io::Error,
    },

    #[error("malformed manifest: {0}")]
    Manifest(String),

    #[error("tensor `{tensor}`: blob {path} is missing")]
    MissingBlob { tensor: String, path: PathBuf },

    #[error("tensor `{tensor}`: expected {expected} bytes, blob has {actual}")]
    ByteLength {
        tensor: String,
        expected: usize,
        actual: usize,
    },

    #[error("duplicate tensor name `{0}`")]
    DuplicateName(String),

    #[error("tensor `{0}` contains non-finite values")]
    NonFinite(String),

    #[error("tensor `{tensor}`: {reason}")]
    InvalidRecord { tensor: String, reason: String },
}
