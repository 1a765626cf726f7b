use thiserror::Error;

pub type Result<T> = std::result::Result<T, Error>;

#[derive(Debug, Error)]
pub enum Error {
    /// Domain or run configuration outside its admissible range.
    #[error("{0}")]
    InvalidSpec(String),

    #[error("invalid argument: {0}")]
    InvalidArgument(String),

    #[error("degenerate cell {cell}: {reason}")]
    DegenerateCell { cell: usize, reason: String },

    #[error("size mismatch: expected {expected} values, got {got}")]
    SizeMismatch { expected: usize, got: usize },

    #[error("domain has an empty boundary")]
    EmptyBoundary,

    #[error("mesh carries no boundary co-normals")]
    MissingConormals,

    #[error("field has nonzero mean {mean:.3e} (tolerance {tol:.3e})")]
    NonzeroMean { mean: f64, tol: f64 },

    #[error("eigensolver did not converge: worst residual {achieved:.3e}")]
    EigenNonConvergence { achieved: f64 },

    #[error("linear solver failure: {0}")]
    Solver(String),

    #[error("unsupported configuration: {0}")]
    Unsupported(String),

    #[error("overflow evaluating {0}")]
    Overflow(String),

    #[error("zero field")]
    ZeroField,

    #[error("parse error at line {line}: {msg}")]
    Parse { line: usize, msg: String },

    #[error(transparent)]
    Io(#[from] std::io::Error),

    #[error(transparent)]
    Json(#[from] serde_json::Error),
}

impl Error {
    /// True for errors caused by bad user input rather than a numerical failure.
    pub fn is_config(&self) -> bool {
        matches!(
            self,
            Error::InvalidSpec(_)
                | Error::InvalidArgument(_)
                | Error::Parse { .. }
                | Error::Unsupported(_)
                | Error::SizeMismatch { .. }
                | Error::Io(_)
        )
    }
}
