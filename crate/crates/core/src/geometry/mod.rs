//! Pinhole-camera and point-normal plane geometry.
//!
//! Conventions used throughout the crate:
//! * the camera center is the origin, `x` right, `y` down, `z` forward;
//! * pixel `(u, v)` addresses the pixel center at integer coordinates;
//! * a plane is `(n, t)` with `n` unit length and `n . X = t` for points `X`
//!   on it, oriented so that `t > 0` (the normal points away from the camera).

mod camera;
mod ground_truth;
mod maps;
mod plane;
pub mod vec3;

use thiserror::Error;

pub use camera::{CameraIntrinsics, PixelRay};
pub use ground_truth::{derive_gt_normal_distance, GroundTruthPlanes};
pub use maps::{DepthMap, DistanceMap, NormalMap};
pub use plane::{
    canonicalize_plane, depth_map_from_plane_fields, plane_to_depth, plane_to_depth_along,
    DEFAULT_DENOM_EPS,
};

#[derive(Debug, Error, Clone, PartialEq)]
pub enum GeometryError {
    #[error("invalid intrinsics: {0}")]
    InvalidIntrinsics(String),
    #[error("depth must be positive, got {0}")]
    NonPositiveDepth(f64),
    #[error("plane distance must be non-zero")]
    ZeroDistance,
    #[error("normal is not unit length (norm {0})")]
    NotUnitNormal(f64),
    #[error("ray parallel to plane (|n . r| = {0})")]
    RayParallel(f64),
    #[error("plane behind camera (depth {0})")]
    BehindCamera(f64),
    #[error("shape mismatch: {0}")]
    ShapeMismatch(String),
}
