//! Minimal reverse-mode automatic differentiation.
//!
//! Values are dense rank-1 or rank-2 arrays of `f64`. A [`Tape`] records every
//! operation as it is evaluated; [`Tape::backward`] sweeps the records in reverse
//! and returns a [`Gradients`] table. Only the handful of operations needed by the
//! embedding network and the soft-path loss are provided.

mod check;
pub(crate) mod kernels;
mod tape;
mod tensor;

pub use check::grad_check;
pub use tape::{Gradients, NodeRef, Tape, DIST_GRAD_EPS};
pub use tensor::{Shape, Tensor};
