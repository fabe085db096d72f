use thiserror::Error;

/// Errors produced by the library.
///
/// The variants line up with the CLI exit-code taxonomy, see
/// [`Error::exit_code`].
#[derive(Debug, Error)]
pub enum Error {
    /// An argument violates a precondition of the operation.
    #[error("domain error: {0}")]
    Domain(String),

    /// Two inputs that must share a shape do not.
    #[error("shape mismatch: {0}")]
    Shape(String),

    /// A binary container could not be decoded.
    #[error("format error: {0}")]
    Format(String),

    /// A structured document is well-formed but violates its schema.
    #[error("schema error: {0}")]
    Schema(String),

    /// A randomized construction gave up after its retry budget.
    #[error("infeasible: {0}")]
    Infeasible(String),

    #[error("i/o error: {0}")]
    Io(#[from] std::io::Error),
}

impl Error {
    pub(crate) fn domain(msg: impl Into<String>) -> Self {
        Error::Domain(msg.into())
    }

    pub(crate) fn shape(msg: impl Into<String>) -> Self {
        Error::Shape(msg.into())
    }

    pub(crate) fn format(msg: impl Into<String>) -> Self {
        Error::Format(msg.into())
    }

    pub(crate) fn schema(msg: impl Into<String>) -> Self {
        Error::Schema(msg.into())
    }

    /// Process exit status used by the CLI for this error.
    ///
    /// `0` ok, `1` i/o, `2` format, `3` schema, `4` infeasible,
    /// `5` acceptance failure (not an error variant), `6` domain/shape.
    pub fn exit_code(&self) -> u8 {
        match self {
            Error::Io(_) => 1,
            Error::Format(_) => 2,
            Error::Schema(_) => 3,
            Error::Infeasible(_) => 4,
            Error::Domain(_) | Error::Shape(_) => 6,
        }
    }
}

impl From<serde_json::Error> for Error {
    fn from(err: serde_json::Error) -> Self {
        if err.is_io() {
            Error::Io(err.into())
        } else {
            Error::Schema(err.to_string())
        }
    }
}

pub type Result<T> = std::result::Result<T, Error>;
