//! Reverse-mode automatic differentiation over dense row-major tensors,
//! restricted to the operations a small vision transformer and
//! convolutional decoder need, plus an AdamW optimizer and a checkpoint
//! format.

pub mod checkpoint;
mod element;
mod error;
pub mod gradcheck;
mod kernels;
mod ops;
pub mod optim;
mod tensor;

pub use checkpoint::NamedArray;
pub use element::Element;
pub use error::{Error, Result};
pub use ops::BatchNormStats;
pub use optim::{AdamW, ParamGroup};
pub use tensor::Tensor;
