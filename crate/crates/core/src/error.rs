use thiserror::Error;

#[derive(Debug, Error)]
pub enum Error {
    #[error("invalid argument: {0}")]
    InvalidArgument(String),

    #[error("invalid template: {0}")]
    Template(String),

    /// A mathematical precondition of the requested computation does not hold
    /// (window not inside a gap, coupling scale below the certified minimum, ...).
    #[error("precondition failed: {0}")]
    Precondition(String),

    #[error("step size underflow: could not reach tolerance {tol:e} with {steps} steps per period")]
    StepUnderflow { tol: f64, steps: usize },

    #[error("degenerate monodromy: |D| = 2 within {0:e}")]
    DegenerateMonodromy(f64),

    /// A warning raised while `escalate_warnings` is set.
    #[error("warning escalated to error: {0}")]
    Escalated(String),

    #[error("config error: {0}")]
    Config(String),

    #[error(transparent)]
    Io(#[from] std::io::Error),

    #[error(transparent)]
    Csv(#[from] csv::Error),

    #[error(transparent)]
    Json(#[from] serde_json::Error),
}

pub type Result<T> = std::result::Result<T, Error>;

impl Error {
    /// Process exit code used by the command-line front end.
    pub fn exit_code(&self) -> i32 {
        match self {
            Error::StepUnderflow { .. } | Error::DegenerateMonodromy(_) | Error::Escalated(_) => 3,
            Error::Precondition(_) => 4,
            _ => 2,
        }
    }
}
