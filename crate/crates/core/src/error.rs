use thiserror::Error;

#[derive(Debug, Error)]
pub enum Error {
    /// Shapes that must agree do not.
    #[error("dimension mismatch: {0}")]
    Dimension(String),

    /// The cross-covariance between the two clouds carries no signal, so no
    /// rotation is defined.
    #[error("degenerate alignment: {0}")]
    DegenerateAlignment(String),

    #[error("invalid input: {0}")]
    InvalidInput(String),

    #[error("invalid configuration: {0}")]
    InvalidConfig(String),

    #[error("frame {index}: {source}")]
    Frame {
        index: usize,
        #[source]
        source: Box<Error>,
    },
}

pub type Result<T> = std::result::Result<T, Error>;

pub(crate) fn dim_err(msg: impl Into<String>) -> Error {
    Error::Dimension(msg.into())
}
