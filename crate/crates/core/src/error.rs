use std::path::PathBuf;

/// Everything that can go wrong while configuring or running a bandit experiment.
#[derive(Debug, thiserror::Error)]
pub enum BanditError {
    #[error("invalid configuration: {0}")]
    InvalidConfig(String),

    #[error("invalid argument: {0}")]
    InvalidArgument(String),

    #[error("dimension mismatch: expected {expected}, got {actual}")]
    DimensionMismatch { expected: usize, actual: usize },

    #[error("non-finite score {value} for arm {arm}")]
    NonFiniteScore { arm: usize, value: f64 },

    #[error("training diverged at epoch {epoch}")]
    DivergedTraining { epoch: usize },

    #[error("numeric error: {0}")]
    Numeric(String),

    #[error("{path}:{line}: {message}")]
    Parse {
        path: String,
        line: usize,
        message: String,
    },

    #[error("unseen category {value:?} for attribute {attribute}")]
    Encoding { attribute: usize, value: char },

    #[error("{path}: {message}")]
    Format { path: String, message: String },

    #[error("inconsistent dataset: {0}")]
    Consistency(String),

    #[error("incompatible traces: {0}")]
    IncompatibleTraces(String),

    #[error("checkpoint: {0}")]
    Checkpoint(String),

    #[error("{}: {source}", path.display())]
    Io {
        path: PathBuf,
        #[source]
        source: std::io::Error,
    },

    #[error("round {round}: {source}")]
    AtRound {
        round: usize,
        #[source]
        source: Box<BanditError>,
    },
}

impl BanditError {
    pub(crate) fn io(path: impl Into<PathBuf>, source: std::io::Error) -> Self {
        BanditError::Io {
            path: path.into(),
            source,
        }
    }

    pub(crate) fn at_round(self, round: usize) -> Self {
        BanditError::AtRound {
            round,
            source: Box::new(self),
        }
    }

    /// True for errors caused by bad user input (config, paths, dataset files)
    /// rather than failures during a run.
    pub fn is_config_error(&self) -> bool {
        match self {
            BanditError::InvalidConfig(_)
            | BanditError::Parse { .. }
            | BanditError::Format { .. }
            | BanditError::Consistency(_)
            | BanditError::Encoding { .. }
            | BanditError::Io { .. } => true,
            BanditError::AtRound { source, .. } => source.is_config_error(),
            _ => false,
        }
    }
}

pub type Result<T> = std::result::Result<T, BanditError>;
