use thiserror::Error;

/// Errors raised by the sketching, testing and simulation routines.
#[derive(Debug, Error)]
pub enum Error {
    #[error("dimension mismatch: {0}")]
    Dimension(String),

    #[error("malformed input: {0}")]
    Data(String),

    #[error("non-finite value in {0}")]
    NonFinite(&'static str),

    #[error("invalid parameter: {0}")]
    InvalidParameter(String),

    #[error("theory-mode sparse threshold needs the sparsity level k")]
    MissingSparsity,

    #[error("singular matrix: {0}")]
    Singular(String),

    #[error("numerical failure: {0}")]
    Numerical(String),

    #[error("{failed} of {reps} replicates failed (budget {budget}): {last}")]
    FailureBudget {
        failed: usize,
        reps: usize,
        budget: usize,
        last: String,
    },

    #[error(transparent)]
    Io(#[from] std::io::Error),

    #[error(transparent)]
    Csv(#[from] csv::Error),

    #[error(transparent)]
    Json(#[from] serde_json::Error),
}

impl Error {
    /// True for failures of the numerical kernels rather than of the inputs.
    pub fn is_numerical(&self) -> bool {
        matches!(
            self,
            Error::Singular(_) | Error::Numerical(_) | Error::FailureBudget { .. }
        )
    }

    /// True for problems with the supplied data: shapes, values, files.
    pub fn is_data(&self) -> bool {
        matches!(
            self,
            Error::Dimension(_) | Error::Data(_) | Error::NonFinite(_) | Error::Io(_) | Error::Csv(_) | Error::Json(_)
        )
    }
}

pub type Result<T> = std::result::Result<T, Error>;
