use std::path::PathBuf;

use thiserror::Error;

pub type Result<T, E = Error> = std::result::Result<T, E>;

#[derive(Debug, Error)]
pub enum Error {
    #[error("shape mismatch in {op}: {left:?} vs {right:?}")]
    ShapeMismatch {
        op: &'static str,
        left: Vec<usize>,
        right: Vec<usize>,
    },

    #[error("non-finite value produced by {op}")]
    NonFinite { op: String },

    #[error("invalid argument: {0}")]
    InvalidArgument(String),

    #[error("backward needs a scalar loss, got shape {0:?}")]
    NonScalarLoss(Vec<usize>),

    #[error("tape already consumed by a previous backward pass")]
    TapeConsumed,

    #[error("variable {0} does not belong to this tape")]
    UnknownVar(usize),

    #[error("gradients missing for parameter set (call zero_grad or run backward first)")]
    MissingGrad,

    #[error("i/o error on {}: {source}", path.display())]
    Io {
        path: PathBuf,
        #[source]
        source: std::io::Error,
    },

    #[error("malformed {what}: {detail}")]
    Format { what: &'static str, detail: String },

    #[error("unsupported parameter file version {found} (expected {expected})")]
    Version { expected: u32, found: u32 },

    #[error("parameter manifest mismatch: expected {expected}, found {found}")]
    ManifestMismatch { expected: String, found: String },

    #[error("empty training set: {0}")]
    EmptyTraining(String),

    #[error("{what} diverged at epoch {epoch}, step {step}: loss is not finite")]
    Diverged {
        what: &'static str,
        epoch: usize,
        step: usize,
    },

    #[error("gan diverged at epoch {epoch}, step {step}: loss is not finite")]
    GanDiverged {
        epoch: usize,
        step: usize,
        last_good: Box<crate::gan::GanModel>,
    },

    #[error("{phase} phase failed: {source}")]
    Phase {
        phase: &'static str,
        #[source]
        source: Box<Error>,
    },

    #[error("config error: {0}")]
    Config(String),
}

impl Error {
    pub(crate) fn io(path: impl Into<PathBuf>, source: std::io::Error) -> Self {
        Error::Io {
            path: path.into(),
            source,
        }
    }

    pub(crate) fn format(what: &'static str, detail: impl Into<String>) -> Self {
        Error::Format {
            what,
            detail: detail.into(),
        }
    }

    pub(crate) fn in_phase(self, phase: &'static str) -> Self {
        Error::Phase {
            phase,
            source: Box::new(self),
        }
    }
}
