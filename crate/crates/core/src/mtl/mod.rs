//! Multitask warm-start predictor.
//!
//! A shared trunk maps the bus loads to features consumed by seven heads,
//! one per solver quantity. The heads for `Z` and `μ` additionally see the
//! predicted `X` (and `μ` the predicted `Z`), mirroring the order in which
//! the solver derives them. Training combines a Charbonnier regression loss
//! with four physics penalties evaluated on the denormalized prediction.

mod loss;
mod model;
mod morph;
mod network;
mod normalize;
mod topology;
mod train;

pub use loss::{
    denormalize, denormalize_all, loss_ac, loss_cost, loss_ieq, loss_lag, loss_supervised, loss_total,
    BatchData, LossTerms, LossWeights, Physical, Physics, Term, EPSILON,
};
pub use model::{MtlModel, Prediction, FORMAT_VERSION};
pub use morph::{deepen, widen};
pub use network::{forward, Bound, Layer, Outputs, Params};
pub use normalize::{NormMode, Normalizer};
pub use topology::{build_separate_topology, build_topology, Activation, Architecture, HeadSpec, MtlTopology};
pub use train::{evaluate_losses, train, EpochLog, LossValues, TrainConfig, TrainLog};

use serde::{Deserialize, Serialize};

use crate::case::Dimensions;

/// The seven predicted quantities.
#[derive(Debug, Clone, Copy, PartialEq, Eq, Hash, Serialize, Deserialize)]
#[serde(rename_all = "lowercase")]
pub enum Task {
    Va,
    Vm,
    Pg,
    Qg,
    Lambda,
    Mu,
    Z,
}

impl Task {
    pub const ALL: [Task; 7] = [Task::Va, Task::Vm, Task::Pg, Task::Qg, Task::Lambda, Task::Mu, Task::Z];
    /// The primal tasks making up `X`.
    pub const X: [Task; 4] = [Task::Va, Task::Vm, Task::Pg, Task::Qg];

    pub fn index(self) -> usize {
        self as usize
    }

    pub fn width(self, d: &Dimensions) -> usize {
        match self {
            Task::Va | Task::Vm => d.n_bus,
            Task::Pg | Task::Qg => d.n_gen,
            Task::Lambda => d.n_eq,
            Task::Mu | Task::Z => d.n_ineq,
        }
    }

    /// Sigmoid-bounded output.
    pub fn bounded(self) -> bool {
        matches!(self, Task::Mu | Task::Z)
    }

    /// Not part of `X`.
    pub fn auxiliary(self) -> bool {
        matches!(self, Task::Lambda | Task::Mu | Task::Z)
    }

    pub fn name(self) -> &'static str {
        match self {
            Task::Va => "va",
            Task::Vm => "vm",
            Task::Pg => "pg",
            Task::Qg => "qg",
            Task::Lambda => "lambda",
            Task::Mu => "mu",
            Task::Z => "z",
        }
    }
}
