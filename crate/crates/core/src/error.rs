use thiserror::Error;

pub type Result<T, E = Error> = std::result::Result<T, E>;

#[derive(Debug, Error)]
pub enum Error {
    #[error("invalid argument: {0}")]
    InvalidArgument(String),

    #[error("topology is disconnected: node {0} is unreachable from node 0")]
    Disconnected(usize),

    #[error("self-loop on node {0}")]
    SelfLoop(usize),

    #[error("edge references unknown node {node} (network has {count} nodes)")]
    UnknownNode { node: usize, count: usize },

    #[error("duplicate edge ({0}, {1})")]
    DuplicateEdge(usize, usize),

    #[error("path is broken between nodes {from} and {to}")]
    BrokenPath { from: usize, to: usize },

    #[error("singular bearing geometry: target coincides with the sensor")]
    SingularGeometry,

    #[error("{0} is not positive definite")]
    NotPositiveDefinite(&'static str),

    #[error("no local term supplied for node {0}")]
    MissingLocalTerm(usize),

    #[error("observation model not supported here: {0}")]
    Unsupported(&'static str),

    #[error("configuration error: {0}")]
    Config(String),

    #[error("numerical failure at step {step}: {source}")]
    Numerical {
        step: usize,
        #[source]
        source: Box<Error>,
    },

    #[error(transparent)]
    Io(#[from] std::io::Error),

    #[error(transparent)]
    Json(#[from] serde_json::Error),

    #[error(transparent)]
    Csv(#[from] csv::Error),
}

impl Error {
    pub(crate) fn at_step(self, step: usize) -> Error {
        match self {
            e @ Error::Numerical { .. } => e,
            other => Error::Numerical {
                step,
                source: Box::new(other),
            },
        }
    }
}
