use std::path::PathBuf;

use thiserror::Error;

#[derive(Debug, Error)]
pub enum HarnessError {
    #[error("{path}: {source}")]
    Io {
        path: PathBuf,
        #[source]
        source: std::io::Error,
    },

    #[error("invalid configuration:\n  - {}", .0.join("\n  - "))]
    Validation(Vec<String>),

    #[error("shape mismatch: checkpoint is {checkpoint}, dataset is {dataset}")]
    ShapeMismatch { checkpoint: String, dataset: String },

    #[error("{path}:{line}: {message}")]
    Parse {
        path: PathBuf,
        line: usize,
        message: String,
    },

    #[error("ledger corruption for lot {lot_id}: recorded digest {recorded}, dataset digest {actual}")]
    Corruption {
        lot_id: String,
        recorded: String,
        actual: String,
    },

    #[error("ledger: {0}")]
    Ledger(String),

    #[error(transparent)]
    Core(#[from] qauction_core::Error),
}

impl HarnessError {
    pub(crate) fn io(path: impl Into<PathBuf>, source: std::io::Error) -> Self {
        Self::Io {
            path: path.into(),
            source,
        }
    }

    /// Process exit status: 2 for invalid input, 3 for runtime failures.
    pub fn exit_code(&self) -> i32 {
        match self {
            Self::Validation(_) | Self::ShapeMismatch { .. } | Self::Parse { .. } => 2,
            Self::Core(qauction_core::Error::InvalidInput(_) | qauction_core::Error::Shape { .. }) => 2,
            _ => 3,
        }
    }
}

pub type Result<T> = std::result::Result<T, HarnessError>;
