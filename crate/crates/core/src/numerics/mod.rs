//! Dense tensors, a reverse-mode tape, and finite-difference checking.

mod gradcheck;
mod tape;
mod tensor;

pub use gradcheck::{central_difference, finite_difference_check};
pub use tape::{Activation, BinaryOp, Gradients, Tape, Var};
pub use tensor::{matmul, Tensor};
