use std::path::PathBuf;

use thiserror::Error;

pub type Result<T> = std::result::Result<T, Error>;

#[derive(Debug, Error)]
pub enum Error {
    #[error("shape mismatch at node {node} ({op}): {detail}")]
    Shape {
        node: usize,
        op: &'static str,
        detail: String,
    },

    #[error("unbound leaf `{0}`")]
    UnboundLeaf(String),

    #[error("non-finite value produced at node {node} ({op})")]
    NonFiniteNode { node: usize, op: &'static str },

    #[error("backward requires a scalar root, got shape {0:?}")]
    NonScalarRoot(Vec<usize>),

    #[error("graph has not been evaluated; run forward first")]
    NotEvaluated,

    #[error("invalid array: {0}")]
    InvalidArray(String),

    #[error("non-finite {term} gradient")]
    NonFiniteGradient { term: &'static str },

    #[error("invalid example: {0}")]
    InvalidExample(String),

    #[error("invalid argument: {0}")]
    InvalidArgument(String),

    #[error("non-finite {what} at step {step}")]
    Divergence { what: String, step: usize },

    #[error("infeasible corpus spec: {0}")]
    InfeasibleCorpus(String),

    #[error("{path}:{line}: {detail}")]
    Parse {
        path: PathBuf,
        line: usize,
        detail: String,
    },

    #[error("checkpoint: {0}")]
    Checkpoint(String),

    #[error(transparent)]
    Io(#[from] std::io::Error),
}
