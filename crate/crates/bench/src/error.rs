use std::fmt;
use std::path::PathBuf;

use thiserror::Error;

pub type Result<T, E = BenchError> = std::result::Result<T, E>;

/// Where inside a repeat a failure happened.
#[derive(Clone, Copy, Debug, PartialEq, Eq)]
pub enum Stage {
    Split,
    Decompose,
    Train,
    Predict,
}

impl fmt::Display for Stage {
    fn fmt(&self, f: &mut fmt::Formatter<'_>) -> fmt::Result {
        f.write_str(match self {
            Stage::Split => "split",
            Stage::Decompose => "decompose",
            Stage::Train => "train",
            Stage::Predict => "predict",
        })
    }
}

#[derive(Debug, Error)]
pub enum BenchError {
    /// Bad flags or an invalid resolved configuration.
    #[error("{0}")]
    Usage(String),

    #[error("config file {path}: {reason}")]
    Config { path: PathBuf, reason: String },

    #[error("repeat {repeat} failed during {stage}: {source}")]
    Repeat {
        repeat: usize,
        stage: Stage,
        #[source]
        source: dtml_core::Error,
    },

    #[error(transparent)]
    Core(#[from] dtml_core::Error),

    #[error("i/o error on {path}: {source}")]
    Io {
        path: PathBuf,
        #[source]
        source: std::io::Error,
    },

    #[error("model file {path}: {reason}")]
    Model { path: PathBuf, reason: String },
}

impl BenchError {
    pub fn io(path: impl Into<PathBuf>, source: std::io::Error) -> Self {
        BenchError::Io {
            path: path.into(),
            source,
        }
    }

    pub fn usage(msg: impl Into<String>) -> Self {
        BenchError::Usage(msg.into())
    }

    /// Process exit code: 1 usage, 2 data, 3 numerical failure.
    pub fn exit_code(&self) -> i32 {
        match self {
            BenchError::Usage(_) | BenchError::Config { .. } => 1,
            BenchError::Io { .. } | BenchError::Model { .. } => 2,
            BenchError::Repeat { source, .. } | BenchError::Core(source) => core_exit_code(source),
        }
    }
}

fn core_exit_code(e: &dtml_core::Error) -> i32 {
    use dtml_core::Error as E;
    match e {
        E::Numerical { .. } | E::InconsistentProjection { .. } => 3,
        E::InvalidParameter { .. } => 1,
        E::DimensionMismatch { .. } | E::InvalidData(_) | E::Parse { .. } | E::Io { .. } => 2,
    }
}
