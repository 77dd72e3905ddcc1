use thiserror::Error;

use crate::mesh::Node;

pub type Result<T, E = Error> = std::result::Result<T, E>;

#[derive(Debug, Error)]
pub enum Error {
    /// A step produced a non-finite value or exceeded the divergence guard.
    #[error("solver diverged at {location} (norm {norm:e})")]
    Divergence { location: String, norm: f64 },

    #[error("propagator ({row}, {col}) is not populated yet")]
    MissingNode { row: Node, col: Node },

    /// A step whose source row would cross `t` without the split nodes.
    #[error("step into ({row}, {col}) from row {from} crosses the observable time")]
    InvalidStep { row: Node, col: Node, from: Node },

    #[error("truncation order {0} is not supported here")]
    UnsupportedOrder(usize),

    #[error("sign is ambiguous at s = t = {0}; pass a split node instead")]
    AmbiguousSign(f64),

    #[error("invalid configuration: {0}")]
    Config(String),

    #[error("need at least {needed} samples, got {got}")]
    TooFewSamples { needed: usize, got: usize },

    #[error("{diverged} of {total} replications diverged")]
    DivergenceRate { diverged: usize, total: usize },

    #[error(transparent)]
    Io(#[from] std::io::Error),

    #[error(transparent)]
    Json(#[from] serde_json::Error),
}

impl Error {
    pub(crate) fn config(msg: impl Into<String>) -> Self {
        Error::Config(msg.into())
    }
}
