use std::path::PathBuf;

use thiserror::Error;

pub type Result<T, E = Error> = std::result::Result<T, E>;

#[derive(Debug, Error)]
pub enum Error {
    #[error("shape mismatch in {op}: {lhs:?} vs {rhs:?}")]
    Shape {
        op: &'static str,
        lhs: (usize, usize),
        rhs: (usize, usize),
    },

    #[error("non-finite value in tensor of shape {0:?}")]
    NonFinite((usize, usize)),

    #[error("loss must be a scalar, got shape {0:?}")]
    NonScalarLoss((usize, usize)),

    #[error("instance too large for exact search: query has {query} nodes (max {max_query}), corpus has {corpus} nodes (max {max_corpus})")]
    InstanceTooLarge {
        query: usize,
        corpus: usize,
        max_query: usize,
        max_corpus: usize,
    },

    #[error("invalid graph {id}: {reason}")]
    InvalidGraph { id: u32, reason: String },

    #[error("graph {id}: dangling endpoint ({u}, {v}) with n = {n}")]
    DanglingEndpoint { id: u32, u: usize, v: usize, n: usize },

    #[error("{path}:{line}: {reason}")]
    Parse {
        path: PathBuf,
        line: usize,
        reason: String,
    },

    #[error("invalid config: {0}")]
    Config(String),

    #[error("empty node set in {0}")]
    EmptyNodeSet(&'static str),

    #[error("token {token} out of range for {bits}-bit vocabulary")]
    TokenOutOfRange { token: u32, bits: u32 },

    #[error("duplicate graph id {0}")]
    DuplicateId(u32),

    #[error("hamming radius {radius} exceeds code width {bits}")]
    RadiusTooLarge { radius: u32, bits: u32 },

    #[error("energy threshold {0} outside (0, 1)")]
    EnergyThreshold(f64),

    #[error("corrupt {what}: {reason}")]
    Corrupt { what: &'static str, reason: String },

    #[error("stage `{stage}` failed")]
    Stage {
        stage: &'static str,
        #[source]
        source: Box<Error>,
    },

    #[error(transparent)]
    Io(#[from] std::io::Error),

    #[error(transparent)]
    Json(#[from] serde_json::Error),
}

impl Error {
    pub(crate) fn shape(op: &'static str, lhs: (usize, usize), rhs: (usize, usize)) -> Self {
        Error::Shape { op, lhs, rhs }
    }
}
