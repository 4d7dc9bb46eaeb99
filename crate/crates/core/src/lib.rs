//! AC optimal power flow toolkit: a primal-dual interior-point solver, a
//! physics-constrained multitask network that predicts warm-start points for
//! it, and the experiment harness measuring the resulting acceleration.

pub mod ad;
pub mod case;
pub mod error;
pub mod experiment;
pub mod ipm;
pub mod mtl;
pub mod pf;
pub mod sparse;
pub mod strategy;

pub use error::{Error, Result};
