use thiserror::Error;

pub type Result<T> = std::result::Result<T, Error>;

#[derive(Debug, Error)]
pub enum Error {
    /// An argument lies outside the domain of the operation.
    #[error("domain error: {0}")]
    Domain(String),

    /// The alternative has no effect in any coordinate, so no sample size exists.
    #[error("undefined design: {0}")]
    UndefinedDesign(String),

    /// An iterative procedure failed to converge or hit its iteration cap.
    #[error("numerical failure: {0}")]
    Convergence(String),

    #[error("no data for group {0}")]
    EmptyGroup(String),

    /// Malformed input record; `line` is 1-based and counts the header.
    #[error("line {line}: {message}")]
    Parse { line: usize, message: String },

    #[error("invalid configuration: {0}")]
    Config(String),

    #[error(transparent)]
    Io(#[from] std::io::Error),
}

impl Error {
    pub(crate) fn domain(msg: impl Into<String>) -> Self {
        Error::Domain(msg.into())
    }

    /// Process exit code used by the command-line tool.
    pub fn exit_code(&self) -> i32 {
        match self {
            Error::Domain(_)
            | Error::UndefinedDesign(_)
            | Error::EmptyGroup(_)
            | Error::Parse { .. }
            | Error::Config(_) => 2,
            Error::Convergence(_) => 3,
            Error::Io(_) => 4,
        }
    }
}
