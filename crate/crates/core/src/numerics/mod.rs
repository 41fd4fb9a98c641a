//! Dense tensor arithmetic and the differentiable layer primitives the feature
//! extractor is built from. Every forward operation has an analytic backward
//! counterpart returning the gradient with respect to its input.

mod activation;
mod conv;
mod pool;
mod tensor;

pub use activation::{relu_backward, relu_forward};
pub use conv::{conv2d_backward_input, conv2d_forward, ConvLayer, KERNEL_SIZE};
pub use pool::{pool2x2_backward, pool2x2_forward, PoolMode, PoolRecord};
pub use tensor::Tensor3;

use thiserror::Error;

#[derive(Debug, Error, Clone, PartialEq)]
pub enum NumericsError {
    #[error("expected {expected} channels, found {found}")]
    ChannelMismatch { expected: usize, found: usize },
    #[error("shape mismatch: expected {expected:?}, found {found:?}")]
    ShapeMismatch {
        expected: (usize, usize, usize),
        found: (usize, usize, usize),
    },
    #[error("expected {expected} values, found {found}")]
    LengthMismatch { expected: usize, found: usize },
    #[error("2x2 pooling needs even dimensions, got {height}x{width}")]
    OddDimension { height: usize, width: usize },
}
