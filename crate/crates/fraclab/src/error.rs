use thiserror::Error;

/// Error type shared by every layer of the crate.
///
/// The CLI maps these onto process exit codes: configuration problems are
/// recoverable by editing the input (exit 2), mathematical degeneracies are
/// properties of the requested problem (exit 3), and numerical failures are
/// breakdowns of the solver itself (exit 4).
#[derive(Debug, Error)]
pub enum Error {
    #[error("configuration error: {0}")]
    Config(String),

    #[error("grid mismatch: {0}")]
    GridMismatch(String),

    #[error("{0} is not supported on the requested index set")]
    Support(String),

    #[error("degenerate problem: {0}")]
    Degenerate(String),

    #[error("numerical failure: {0}")]
    Numerical(String),

    #[error(transparent)]
    Io(#[from] std::io::Error),
}

pub type Result<T> = std::result::Result<T, Error>;

impl Error {
    /// Process exit code used by the command-line driver.
    pub fn exit_code(&self) -> i32 {
        match self {
            Error::Config(_) | Error::GridMismatch(_) | Error::Support(_) => 2,
            Error::Degenerate(_) => 3,
            Error::Numerical(_) | Error::Io(_) => 4,
        }
    }
}
