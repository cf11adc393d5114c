//! Minimal reverse-mode automatic differentiation over dense rank-2
//! tensors.

mod gradcheck;
mod tape;
mod tensor;

pub use gradcheck::{finite_diff_check, relative_error, GradCheckReport};
pub use tape::{DropoutMode, Gradients, Tape, Var};
pub use tensor::{Real, Tensor};

pub(crate) use tape::softplus;
