//! Reverse-mode automatic differentiation over dense matrices.
//!
//! A [`Tape`] records every operation as it is evaluated. Calling
//! [`Tape::backward`] on a scalar node sweeps the record in reverse and
//! returns adjoints for every node reached.

mod physics;
mod tape;
mod tensor;

pub use physics::{ac_residual, cost_poly, flow_h, PhysicsOperands};
pub use tape::{Gradients, SparseOperand, Tape, Var};
pub use tensor::Tensor;
