use thiserror::Error;

/// Errors raised by model construction, simulation, estimation and testing.
#[derive(Debug, Error)]
pub enum Error {
    #[error("unknown model `{0}`")]
    UnknownModel(String),

    #[error("dimension mismatch for {what}: expected {expected}, got {got}")]
    Dimension {
        what: String,
        expected: usize,
        got: usize,
    },

    #[error("invalid parameter box for {what}: {reason}")]
    InvalidBox { what: String, reason: String },

    #[error("invalid argument: {0}")]
    InvalidArgument(String),

    #[error("non-finite state at t = {time} (step {step})")]
    NonFiniteState { step: usize, time: f64 },

    #[error("non-finite value in {what} at step k = {k}")]
    NonFinite { what: String, k: usize },

    #[error("sigma sigma^T is not positive definite at step k = {k} (min eigenvalue {min_eigenvalue:e})")]
    NotPositiveDefinite { k: usize, min_eigenvalue: f64 },

    #[error("sigma sigma^T is not positive definite on the ODE path at t = {time}")]
    SingularDiffusion { time: f64 },

    #[error("{which} is singular (min singular value {min_singular:e}); non-degeneracy of the information matrices fails")]
    SingularInformation { which: String, min_singular: f64 },

    #[error("objective is not finite at the initial point")]
    NonFiniteStart,

    #[error("stage `{stage}` failed: {source}")]
    Stage {
        stage: String,
        #[source]
        source: Box<Error>,
    },

    #[error("{0}")]
    Unsupported(String),

    #[error("parse error at line {line}: {message}")]
    Parse { line: usize, message: String },

    #[error(transparent)]
    Io(#[from] std::io::Error),
}

impl Error {
    pub(crate) fn dim(what: impl Into<String>, expected: usize, got: usize) -> Self {
        Error::Dimension {
            what: what.into(),
            expected,
            got,
        }
    }

    pub(crate) fn in_stage(self, stage: &str) -> Self {
        Error::Stage {
            stage: stage.to_string(),
            source: Box::new(self),
        }
    }

    /// True for failures caused by the numbers (as opposed to usage errors).
    pub fn is_numeric(&self) -> bool {
        match self {
            Error::NonFiniteState { .. }
            | Error::NonFinite { .. }
            | Error::NotPositiveDefinite { .. }
            | Error::SingularDiffusion { .. }
            | Error::SingularInformation { .. }
            | Error::NonFiniteStart => true,
            Error::Stage { source, .. } => source.is_numeric(),
            _ => false,
        }
    }
}

pub type Result<V, E = Error> = std::result::Result<V, E>;
