//! Plane-guided monocular depth estimation at desk scale.
pub mod autodiff;
pub mod geometry;
pub mod grid;
pub mod metrics;
pub mod objectives;
pub mod planenet;
mod scalar;
pub use scalar::Scalar;
pub mod synth;
pub mod training;

pub type PlaneNetF32 = planenet::PlaneNet<f32>;
pub type PlaneNetF64 = planenet::PlaneNet<f64>;
pub type TensorF32 = autodiff::Tensor<f32>;
pub type TensorF64 = autodiff::Tensor<f64>;
pub type ParamStoreF32 = autodiff::ParamStore<f32>;
pub type ParamStoreF64 = autodiff::ParamStore<f64>;
