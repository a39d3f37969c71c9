//! Reverse-mode automatic differentiation over dense `f64` tensors, with
//! the Adam optimizer and a finite-difference checker.

mod adam;
pub mod gradcheck;
mod tape;
mod tensor;

pub use adam::{adam_step, clip_grad_norm, AdamState};
pub use tape::{sigmoid, softmax, Activation, Fault, Gradients, Tape, Var};
pub use tensor::{ParamGrad, ParamGrads, ParamId, ParamStore, Tensor};
