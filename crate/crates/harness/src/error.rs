use thiserror::Error;

pub type Result<T, E = HarnessError> = std::result::Result<T, E>;

#[derive(Debug, Error)]
pub enum HarnessError {
    #[error(transparent)]
    Core(#[from] spacebatch_core::Error),

    #[error("invalid experiment: {0}")]
    InvalidSpec(String),

    #[error("unknown preset `{0}`")]
    UnknownPreset(String),

    #[error("model and simulation tables cover different points: {0}")]
    KeyMismatch(String),

    #[error("{path}: {source}")]
    Io {
        path: String,
        #[source]
        source: std::io::Error,
    },

    #[error(transparent)]
    Csv(#[from] csv::Error),

    #[error(transparent)]
    Json(#[from] serde_json::Error),
}

impl HarnessError {
    pub fn io(path: impl Into<String>, source: std::io::Error) -> Self {
        HarnessError::Io { path: path.into(), source }
    }

    /// Process exit status for this error.
    pub fn exit_code(&self) -> i32 {
        use spacebatch_core::Error as E;
        match self {
            HarnessError::InvalidSpec(_) | HarnessError::UnknownPreset(_) | HarnessError::Json(_) => 2,
            HarnessError::Core(E::InvalidConfig(_) | E::InvalidSweepField(_) | E::InvalidWindow { .. }) => 2,
            HarnessError::Core(E::BatchSizeOutOfRange { .. } | E::TooFewSeeds(_)) => 2,
            HarnessError::Core(E::NonConvergence { .. }) => 3,
            HarnessError::KeyMismatch(_) => 4,
            _ => 1,
        }
    }
}
