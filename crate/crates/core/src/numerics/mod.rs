//! Dense tensors and the reverse-mode differentiation engine.

mod gradcheck;
mod tape;
mod tensor;

pub use gradcheck::{finite_difference_grad, relative_error, Gradients, Parameters, REL_ERR_FLOOR};
pub use tape::{Adjoints, Tape, Value, Var};
pub use tensor::{complex_vecmat, matmul, ComplexTensor, RealTensor};
