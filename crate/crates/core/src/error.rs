use thiserror::Error;

/// Errors produced by every fallible operation in the crate.
#[derive(Debug, Error)]
pub enum Error {
    #[error("shape mismatch in {op}: {left:?} vs {right:?}")]
    Shape {
        op: &'static str,
        left: (usize, usize),
        right: (usize, usize),
    },

    #[error("{op} produced a non-finite value")]
    NonFinite { op: &'static str },

    #[error("cannot pool an empty list of vectors")]
    EmptyPool,

    #[error("invalid configuration: {0}")]
    Config(String),

    #[error("{what} = {value} is outside [{min}, {max}]")]
    Range {
        what: &'static str,
        value: usize,
        min: usize,
        max: usize,
    },

    #[error("cannot draw {k} centers from {n} points")]
    InsufficientPoints { k: usize, n: usize },

    #[error("cluster {index} received zero assignment mass")]
    EmptyCluster { index: usize },

    #[error("contract violation: {0}")]
    Contract(String),

    #[error("{what} index {index} out of bounds (len {len})")]
    Index {
        what: &'static str,
        index: usize,
        len: usize,
    },

    #[error("class {class} has no stored embeddings")]
    UninitializedClass { class: usize },

    #[error("parse error at byte {offset}: {message}")]
    Parse { offset: usize, message: String },

    #[error("image codec error: {0}")]
    Image(String),

    #[error(transparent)]
    Io(#[from] std::io::Error),
}

pub type Result<T> = std::result::Result<T, Error>;
