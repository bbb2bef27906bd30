//! Reverse-mode automatic differentiation over dense `f64` tensors.

mod gradcheck;
mod optim;
mod tape;
mod tensor;

pub use gradcheck::{grad_check, GradCheckReport};
pub use optim::AdamState;
pub use tape::{sigmoid, Activation, CustomOp, Gradients, Tape, Var};
pub use tensor::Tensor;
