//! The small set of differentiable building blocks used by the reward network.

pub mod activation;
pub mod adam;
pub mod dense;
pub mod gradcheck;
pub mod loss;
pub mod mhsa;
pub mod tensor;

pub use activation::{relu_backward, relu_forward};
pub use adam::AdamState;
pub use dense::DenseLayer;
pub use loss::masked_mse;
pub use mhsa::{Mhsa, MhsaCache};
pub use tensor::Tensor;
