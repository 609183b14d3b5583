use thiserror::Error;

#[derive(Debug, Error)]
pub enum Error {
    #[error("invalid grid: {0}")]
    InvalidGrid(String),

    #[error("empty subdomain: {0}")]
    EmptySubdomain(String),

    #[error("fields live on different grids")]
    GridMismatch,

    #[error("singular system (zero pivot in column {column})")]
    Singular { column: usize },

    #[error("invalid argument: {0}")]
    InvalidArgument(String),

    #[error("overflow: {0}")]
    Overflow(String),

    #[error("dense limit exceeded: {0}")]
    DenseLimit(String),

    #[error("iteration did not converge: {0}")]
    NoConvergence(String),

    #[error("config error: {0}")]
    Config(String),

    #[error(transparent)]
    Io(#[from] std::io::Error),
}

pub type Result<T> = std::result::Result<T, Error>;
