//! Dense matrices, a small gradient tape and a finite-difference oracle.

mod gradcheck;
mod matrix;
mod tape;

pub use gradcheck::{finite_diff_grad, relative_error};
pub use matrix::{argmax, log_sum_exp, masked_row_softmax, softmax, Matrix};
pub(crate) use matrix::dot;
pub use tape::{GradTape, Gradients, Var};
