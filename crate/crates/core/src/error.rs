use std::path::PathBuf;

use thiserror::Error;

pub type Result<T> = std::result::Result<T, Error>;

#[derive(Debug, Error)]
pub enum Error {
    #[error("tensor is singular (det = {det:e})")]
    Singular { det: f64 },

    #[error("deformation gradient must have a positive determinant (det = {det:e})")]
    NonPositiveJacobian { det: f64 },

    #[error("tensor is not symmetric (max asymmetry {asymmetry:e})")]
    Asymmetric { asymmetry: f64 },

    #[error("invalid material parameters: {0}")]
    InvalidParams(String),

    #[error("invalid environment: {0}")]
    InvalidEnvironment(String),

    #[error("invalid configuration: {0}")]
    InvalidConfig(String),

    #[error("fixed-point integration did not converge after {iterations} iterations (residual {residual:e})")]
    NonConvergence { iterations: usize, residual: f64 },

    #[error("integration failed at step {step}: {source}")]
    Step {
        step: usize,
        #[source]
        source: Box<Error>,
    },

    #[error("sequence {index}: {source}")]
    Sequence {
        index: usize,
        #[source]
        source: Box<Error>,
    },

    #[error("material failure in element {element}, gauss point {gauss_point}: {source}")]
    GaussPoint {
        element: usize,
        gauss_point: usize,
        #[source]
        source: Box<Error>,
    },

    #[error("newton iteration did not converge after {iterations} iterations (relative residual {residual:e})")]
    NewtonNonConvergence { iterations: usize, residual: f64 },

    #[error("non-positive jacobian determinant {det:e} in element {element}")]
    BadElement { element: usize, det: f64 },

    #[error("path generation exhausted {retries} retries: {reason}")]
    RetriesExhausted { retries: usize, reason: String },

    #[error("shape mismatch: {0}")]
    Shape(String),

    #[error("non-finite loss at epoch {epoch}, batch {batch}")]
    NonFiniteLoss { epoch: usize, batch: usize },

    #[error("{path}:{line}: {message}")]
    Parse {
        path: PathBuf,
        line: usize,
        message: String,
    },

    #[error("unknown material backend `{0}`")]
    UnknownBackend(String),

    #[error("backend `{backend}` cannot evaluate this point record")]
    RecordMismatch { backend: &'static str },

    #[error(transparent)]
    Io(#[from] std::io::Error),
}

impl Error {
    pub(crate) fn at_step(self, step: usize) -> Error {
        Error::Step {
            step,
            source: Box::new(self),
        }
    }
}
