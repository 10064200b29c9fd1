//! Dense tensors, differentiable kernels, Adam and finite-difference checks.

pub mod adam;
pub mod gradcheck;
pub mod kernels;
pub mod tape;
pub mod tensor;

pub use adam::{adam_step, AdamState};
pub use gradcheck::{grad_check, GradCheck};
pub use tape::{Gradients, Tape, Var};
pub use tensor::{Scalar, Tensor};
