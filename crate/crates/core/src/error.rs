use thiserror::Error;

pub type Result<T, E = Error> = std::result::Result<T, E>;

#[derive(Debug, Error)]
pub enum Error {
    #[error("invalid input: {0}")]
    InvalidInput(String),

    #[error("shape mismatch: expected {expected}, found {found}")]
    ShapeMismatch { expected: String, found: String },

    #[error("series too short: length {len}, need at least {min}")]
    SeriesTooShort { len: usize, min: usize },

    #[error("matrix is not symmetric (max asymmetry {0:e})")]
    NotSymmetric(f64),

    #[error("metric undefined for a single token")]
    SingleToken,

    #[error("empty input: {0}")]
    Empty(&'static str),

    #[error("{what} index {index} out of range (len {len})")]
    IndexOutOfRange {
        what: &'static str,
        index: usize,
        len: usize,
    },

    #[error("token id {id} outside vocabulary of size {vocab}")]
    Vocabulary { id: usize, vocab: usize },

    #[error("forward pass diverged at {}", describe_site(*.recurrence, *.layer))]
    Diverged {
        recurrence: Option<usize>,
        layer: usize,
    },

    #[error("need at least {needed} recurrences, trace has {got}")]
    InsufficientRecurrences { needed: usize, got: usize },

    #[error("trace is missing required capture: {0}")]
    MissingCapture(&'static str),

    #[error("invalid model config: {0}")]
    Config(String),

    #[error("weight file: {0}")]
    WeightFormat(String),

    #[error(transparent)]
    Io(#[from] std::io::Error),

    #[error(transparent)]
    Json(#[from] serde_json::Error),
}

fn describe_site(recurrence: Option<usize>, layer: usize) -> String {
    match recurrence {
        Some(r) => format!("recurrence {r}, layer {layer}"),
        None => format!("layer {layer}"),
    }
}

impl Error {
    pub(crate) fn shape(expected: impl Into<String>, found: impl Into<String>) -> Self {
        Error::ShapeMismatch {
            expected: expected.into(),
            found: found.into(),
        }
    }

    /// Attach a recurrence index to a divergence raised inside a block.
    pub(crate) fn at_recurrence(self, r: usize) -> Self {
        match self {
            Error::Diverged { layer, .. } => Error::Diverged {
                recurrence: Some(r),
                layer,
            },
            other => other,
        }
    }
}
