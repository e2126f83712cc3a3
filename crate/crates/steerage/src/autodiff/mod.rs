//! Reverse-mode automatic differentiation over dense f64 tensors.

pub mod adam;
pub mod kernels;
pub mod lstm;
pub mod tape;
pub mod tensor;

pub use adam::{Adam, DEFAULT_BETAS, DEFAULT_EPS, DEFAULT_LR};
pub use lstm::{lstm_step, LstmWeightIds};
pub use tape::{Gradients, Tape, ValueId};
pub use tensor::Tensor;
