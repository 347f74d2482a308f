use thiserror::Error;

pub type Result<T> = std::result::Result<T, Error>;

#[derive(Debug, Error)]
pub enum Error {
    #[error("invalid argument: {0}")]
    InvalidArgument(String),

    #[error("domain error: {0}")]
    Domain(String),

    #[error("singular cross-product matrix at IRLS iteration {iteration}")]
    Singular { iteration: usize },

    #[error("eigendecomposition failed: matrix is not positive definite (smallest eigenvalue {smallest_eigenvalue:e})")]
    Decomposition { smallest_eigenvalue: f64 },

    #[error("simulation cell p={p} n={n} rho={rho} failed: all {replications} replications diverged")]
    CellFailed {
        p: usize,
        n: usize,
        rho: f64,
        replications: usize,
    },

    #[error("line {line}: {message}")]
    Parse { line: usize, message: String },

    #[error(transparent)]
    Io(#[from] std::io::Error),

    #[error(transparent)]
    Json(#[from] serde_json::Error),
}

impl Error {
    pub(crate) fn invalid(msg: impl Into<String>) -> Self {
        Error::InvalidArgument(msg.into())
    }

    /// Process exit code for the command-line front end: 1 usage, 2 data, 3 numerical.
    pub fn exit_code(&self) -> i32 {
        match self {
            Error::InvalidArgument(_) => 1,
            Error::Domain(_) | Error::Parse { .. } | Error::Io(_) | Error::Json(_) => 2,
            Error::Singular { .. } | Error::Decomposition { .. } | Error::CellFailed { .. } => 3,
        }
    }
}
