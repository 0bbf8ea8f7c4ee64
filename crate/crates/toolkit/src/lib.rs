//! Operational shell around the depth network: configuration, training,
//! checkpoints, evaluation, inference, ablations and the `plane2depth` CLI.

pub mod ablate;
pub mod checkpoint;
pub mod cli;
pub mod colormap;
pub mod config;
pub mod error;
pub mod eval;
pub mod infer;
pub mod train;

pub use error::{Result, ToolError};
