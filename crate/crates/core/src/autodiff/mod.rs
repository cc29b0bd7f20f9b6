//! Minimal reverse-mode automatic differentiation over dense `f64` tensors.

mod gradcheck;
mod params;
mod tape;
mod tensor;

pub use gradcheck::{finite_difference_check, GradCheckReport};
pub use params::{Parameter, ParameterSet};
pub use tape::{concat, Tape, Var};
pub use tensor::{broadcast_shape, Tensor};

pub(crate) use tape::normal_cdf;
