//! Dense tensors and reverse-mode differentiation.

mod gradcheck;
mod graph;
mod params;
mod tensor;

pub use gradcheck::{finite_diff_check, param_finite_diff, relative_error, CoordCheck};
pub use graph::{sigmoid, Gradients, Graph, Var, NLL_CLAMP};
pub use params::{ParamId, ParamStore, Parameter};
pub use tensor::Tensor;
