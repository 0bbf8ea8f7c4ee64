use std::path::{Path, PathBuf};

use plane2depth::geometry::GeometryError;
use plane2depth::metrics::MetricsError;
use plane2depth::planenet::NetError;
use plane2depth::synth::SynthError;
use plane2depth::training::TrainError;
use thiserror::Error;

#[derive(Debug, Error)]
pub enum ToolError {
    /// Bad arguments or configuration; exit code 2.
    #[error("{0}")]
    Usage(String),
    #[error("{path}: {source}")]
    Io {
        path: PathBuf,
        #[source]
        source: std::io::Error,
    },
    #[error("{0}")]
    Checkpoint(String),
    #[error(transparent)]
    Geometry(#[from] GeometryError),
    #[error(transparent)]
    Synth(#[from] SynthError),
    #[error(transparent)]
    Net(#[from] NetError),
    #[error(transparent)]
    Train(#[from] TrainError),
    #[error(transparent)]
    Metrics(#[from] MetricsError),
    #[error("training diverged at iteration {iteration}: {detail}")]
    Diverged { iteration: u64, detail: String },
}

impl ToolError {
    pub fn io(path: &Path, source: std::io::Error) -> Self {
        Self::Io {
            path: path.to_path_buf(),
            source,
        }
    }

    pub fn usage(msg: impl Into<String>) -> Self {
        Self::Usage(msg.into())
    }

    pub fn is_usage(&self) -> bool {
        match self {
            Self::Usage(_) => true,
            Self::Net(e) => matches!(e, NetError::Config(_) | NetError::InputSize { .. }),
            Self::Synth(e) => matches!(e, SynthError::Config(_)),
            _ => false,
        }
    }

    pub fn exit_code(&self) -> i32 {
        if self.is_usage() {
            2
        } else {
            1
        }
    }

    /// Short machine-readable category used as the error line prefix.
    pub fn kind(&self) -> &'static str {
        match self {
            _ if self.is_usage() => "usage",
            Self::Io { .. } => "io",
            Self::Checkpoint(_) => "checkpoint",
            Self::Synth(_) | Self::Geometry(_) => "data",
            Self::Net(_) => "model",
            Self::Train(_) | Self::Diverged { .. } => "train",
            Self::Metrics(_) => "metrics",
            Self::Usage(_) => "usage",
        }
    }
}

pub type Result<T, E = ToolError> = std::result::Result<T, E>;
