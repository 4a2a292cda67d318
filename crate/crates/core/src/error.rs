use thiserror::Error;

pub type Result<T> = std::result::Result<T, Error>;

#[derive(Debug, Error)]
pub enum Error {
    #[error("configuration error: {0}")]
    Config(String),

    #[error("numerical error: {0}")]
    Numerical(String),

    /// A parameter vector picked up a NaN or infinite entry.
    #[error("divergence at tick {tick}")]
    Divergence { tick: u64 },

    /// A bound was requested outside the region where it is valid.
    #[error("precondition violated: {0}")]
    Precondition(String),

    #[error("domain error: {0}")]
    Domain(String),

    #[error("all {trials} trials diverged")]
    AllDiverged { trials: usize },

    #[error("graph generation failed: {0}")]
    Generation(String),

    #[error("io error: {0}")]
    Io(#[from] std::io::Error),

    #[error("json error: {0}")]
    Json(#[from] serde_json::Error),

    #[error("csv error: {0}")]
    Csv(#[from] csv::Error),
}

impl Error {
    /// Process exit code for the command-line runner.
    pub fn exit_code(&self) -> i32 {
        match self {
            Error::Config(_) | Error::Json(_) | Error::Csv(_) | Error::Io(_) | Error::Domain(_) => 1,
            Error::Precondition(_) => 1,
            Error::Numerical(_) | Error::Divergence { .. } | Error::Generation(_) => 2,
            Error::AllDiverged { .. } => 3,
        }
    }
}
