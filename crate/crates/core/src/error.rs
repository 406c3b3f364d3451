use thiserror::Error;

#[derive(Debug, Error)]
pub enum Error {
    #[error("invalid parameter: {0}")]
    InvalidParameter(String),

    #[error("no active nodes")]
    EmptyGraph,

    #[error("gini index undefined: {0}")]
    UndefinedGini(&'static str),

    #[error("target distance function {kind} does not define k = {k}")]
    UnsupportedK { kind: &'static str, k: usize },

    #[error("active neighbor {id} is co-located with node {node}")]
    DegenerateDistance { node: usize, id: usize },

    #[error("config: {0}")]
    Config(String),

    #[error(transparent)]
    Io(#[from] std::io::Error),
}

pub type Result<T> = std::result::Result<T, Error>;
