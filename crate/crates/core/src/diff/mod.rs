//! Tensors, reverse-mode differentiation, network containers, finite
//! difference checks, and the binary checkpoint format.

pub mod checkpoint;
pub mod fdcheck;
pub mod net;
pub mod tape;
pub mod tensor;

pub use net::{
    argmax_row, gaussian_like, grad_wrt_input, plan_param_count, uniform_pm1_like, LayerSpec,
    Network, Parameters, TapedForward,
};
pub use tape::{Gradients, NodeId, Tape};
pub use tensor::{stack, Scalar, Tensor};
