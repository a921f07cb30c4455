use std::path::PathBuf;

use thiserror::Error;

pub type Result<T, E = Error> = std::result::Result<T, E>;

#[derive(Debug, Error)]
pub enum Error {
    #[error("length mismatch: shape {shape:?} needs {expected} values, got {actual}")]
    LengthMismatch {
        shape: Vec<usize>,
        expected: usize,
        actual: usize,
    },

    #[error("invalid shape {0:?}: dims must be >= 1 and rank in 1..=3")]
    InvalidShape(Vec<usize>),

    #[error("shape mismatch in {op}: {left:?} vs {right:?}")]
    ShapeMismatch {
        op: &'static str,
        left: Vec<usize>,
        right: Vec<usize>,
    },

    #[error("invalid axis {axis} for rank {rank}")]
    InvalidAxis { axis: usize, rank: usize },

    #[error("loss must have exactly one element, got shape {0:?}")]
    NonScalarLoss(Vec<usize>),

    #[error("tape is empty")]
    EmptyTape,

    #[error("node {0} does not belong to this tape")]
    UnknownNode(usize),

    #[error("non-finite value produced by {0}")]
    NonFinite(&'static str),

    #[error("invalid argument: {0}")]
    InvalidArgument(String),

    #[error("batch norm in train mode needs at least 2 values per channel, got {0}")]
    BatchTooSmall(usize),

    #[error("input length {length} is shorter than the largest kernel {kernel}")]
    InputTooShort { length: usize, kernel: usize },

    #[error("cutoff at or above Nyquist: {high_hz} Hz with fs {fs_hz} Hz")]
    AboveNyquist { high_hz: f64, fs_hz: f64 },

    #[error("signal too short: {length} samples, need more than {required}")]
    SignalTooShort { length: usize, required: usize },

    #[error("zero variance in lead {0}")]
    ZeroVariance(usize),

    #[error("fold out of range at row {row}: {fold}")]
    FoldOutOfRange { row: usize, fold: i64 },

    #[error("malformed manifest row {row}: {reason}")]
    MalformedRow { row: usize, reason: String },

    #[error("empty {0} split")]
    EmptySplit(&'static str),

    #[error("target outside {{0,1}}: {0}")]
    InvalidTarget(f64),

    #[error("macro AUROC undefined: {0}")]
    MacroAurocUndefined(String),

    #[error("AUROC undefined: need at least one positive and one negative")]
    AurocUndefined,

    #[error("checkpoint: bad magic")]
    BadMagic,

    #[error("checkpoint: unsupported format version {found} (expected {expected})")]
    VersionMismatch { found: u32, expected: u32 },

    #[error("unexpected end of checkpoint")]
    Truncated,

    #[error("checkpoint: corrupt tensor record {name}: {reason}")]
    CorruptTensor { name: String, reason: String },

    #[error("model/task mismatch: checkpoint expects {checkpoint:?}, requested {requested:?}")]
    ConfigMismatch {
        checkpoint: Vec<usize>,
        requested: Vec<usize>,
    },

    #[error("non-finite loss at epoch {epoch}, step {step} (recent grad norms {grad_norms:?})")]
    NonFiniteLoss {
        epoch: usize,
        step: usize,
        grad_norms: Vec<f64>,
    },

    #[error("unknown task {0:?}")]
    UnknownTask(String),

    #[error("parse error in {context}: {reason}")]
    Parse { context: String, reason: String },

    #[error("{path}: {source}")]
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

    pub(crate) fn invalid(msg: impl Into<String>) -> Self {
        Error::InvalidArgument(msg.into())
    }

    /// True for errors caused by bad user input rather than a failure at run time.
    pub fn is_validation(&self) -> bool {
        !matches!(
            self,
            Error::Io { .. } | Error::NonFiniteLoss { .. } | Error::NonFinite(_)
        )
    }
}
