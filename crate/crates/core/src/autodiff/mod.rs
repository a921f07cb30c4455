//! Dense tensors and reverse-mode differentiation over a per-pass tape.

pub mod gradcheck;
mod ops;
mod tape;
mod tensor;

pub use ops::{sigmoid, Reduction};
pub use tape::{GradientMap, Operation, Tape, Var};
pub use tensor::{Tensor, MAX_RANK};

pub(crate) use ops::{axpy, dot, zip_map};
