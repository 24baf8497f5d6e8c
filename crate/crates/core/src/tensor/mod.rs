//! A small reverse-mode autodiff engine: dense tensors, a tape of ops,
//! named parameter sets, AdamW and a binary checkpoint format.

pub mod adam;
pub mod checkpoint;
pub mod params;
pub mod tape;
#[allow(clippy::module_inception)]
pub mod tensor;

pub use adam::{Adam, AdamConfig};
pub use params::{Bound, Param, ParamId, ParamSet};
pub use tape::{Gradients, Tape, Var};
pub use tensor::{CsrMatrix, SparseOperator, Tensor};
