//! Minimal CPU autodiff used by the matting networks.

pub mod adam;
pub mod graph;
pub mod kernels;
pub mod layers;
pub mod store;
pub mod tensor;

pub use adam::{Adam, AdamConfig};
pub use graph::{Gradients, Graph, PoolIndices, Var};
pub use kernels::ConvGeom;
pub use layers::{BatchNorm, Conv, ConvBnRelu, ConvTranspose, Ctx, Mode, RunningStatUpdate};
pub use store::{TensorId, TensorStore};
pub use tensor::Tensor;
