//! Procedural piecewise-planar rooms with exact depth, normal, distance and
//! plane-id ground truth.

mod dataset;
pub mod pfm;
mod render;
mod scene;
mod texture;

use std::path::PathBuf;

use thiserror::Error;

pub use dataset::{
    read_dataset, read_manifest, read_sample, sample_dir_name, write_dataset, write_sample, Manifest,
    ManifestEntry, SampleMeta,
};
pub use pfm::{read_pfm, write_pfm};
pub use render::{render, RenderedSample, NO_PLANE};
pub use scene::{generate_scene, Extent, GenerationConfig, PlanePrimitive, SceneSpec};
pub use texture::{Texture, TextureKind};

#[derive(Debug, Error)]
pub enum SynthError {
    #[error("invalid scene configuration: {0}")]
    Config(String),
    #[error("io error at {path}: {source}")]
    Io {
        path: PathBuf,
        #[source]
        source: std::io::Error,
    },
    #[error("malformed file {path}: {msg}")]
    Format { path: PathBuf, msg: String },
}

impl SynthError {
    pub(crate) fn io(path: impl Into<PathBuf>, source: std::io::Error) -> Self {
        Self::Io {
            path: path.into(),
            source,
        }
    }

    pub(crate) fn format(path: impl Into<PathBuf>, msg: impl Into<String>) -> Self {
        Self::Format {
            path: path.into(),
            msg: msg.into(),
        }
    }
}
