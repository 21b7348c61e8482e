//! File formats: `SFT1` tensors, PNG masks and images, dataset manifests.

pub mod dataset;
pub mod png;
pub mod tensor;

pub use png::{read_mask, read_rgb, write_mask, write_rgb};
pub use tensor::{read_tensor, write_tensor, Tensor, TensorError};
