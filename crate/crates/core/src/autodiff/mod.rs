//! Reverse-mode automatic differentiation over dense matrices.

mod gradcheck;
mod graph;
mod params;
mod tensor;

pub use gradcheck::{check_gradients, relative_error, GradCheckReport};
pub use graph::{sigmoid, DepthClamp, Graph, Var};
pub use params::{Adam, ParamId, ParamStore};
pub use tensor::{gemm_into, matmul, Tensor};
