//! Primal-dual interior-point solver for AC-OPF with warm-start injection.
//!
//! The formulation follows the usual barrier Lagrangian
//! `f(x) + λᵀg(x) + μᵀ(h(x) + z) − γ Σ ln z` with `h ≤ 0` holding both the
//! branch-flow rows and one row per finite variable bound. Each Newton
//! iteration updates `x` and `λ`, then `z` from `x`, and last `μ` from `x`
//! and `z`.

mod kkt;
mod solver;

pub use solver::{
    apply_warm_start, check_convergence, cold_start, evaluate, newton_step, solve,
    solve_with_fallback, step_lengths, Conditions, Evaluation, Step,
};

use serde::{Deserialize, Serialize};

use crate::pf::OpfVector;

pub const Z_FLOOR: f64 = 1e-8;

#[derive(Debug, Clone, PartialEq, Serialize, Deserialize)]
#[serde(default)]
pub struct IpmOptions {
    pub feastol: f64,
    pub gradtol: f64,
    pub comptol: f64,
    pub costtol: f64,
    pub max_iterations: usize,
    /// Centering parameter.
    pub sigma: f64,
    /// Fraction-to-boundary factor.
    pub xi: f64,
    /// Initial barrier weight.
    pub gamma0: f64,
    /// Multiplier applied to the cost inside the solver; reported objectives
    /// are unscaled.
    pub cost_mult: f64,
    pub alpha_min: f64,
    pub max_step_size: f64,
    /// Halve the step up to five times when the Lagrangian gradient grows.
    pub step_control: bool,
}

impl Default for IpmOptions {
    fn default() -> Self {
        Self {
            feastol: 1e-6,
            gradtol: 1e-6,
            comptol: 1e-6,
            costtol: 1e-6,
            max_iterations: 150,
            sigma: 0.1,
            xi: 0.99995,
            gamma0: 1.0,
            cost_mult: 1e-4,
            alpha_min: 1e-8,
            max_step_size: 1e10,
            step_control: false,
        }
    }
}

impl IpmOptions {
    pub fn validate(&self) -> crate::Result<()> {
        let tols = [self.feastol, self.gradtol, self.comptol, self.costtol];
        if tols.iter().any(|&t| !(t > 0.0)) {
            return Err(crate::Error::Invalid("tolerances must be positive".into()));
        }
        if !(self.xi > 0.0 && self.xi < 1.0) {
            return Err(crate::Error::Invalid("xi must lie in (0, 1)".into()));
        }
        if !(self.sigma > 0.0 && self.sigma < 1.0) {
            return Err(crate::Error::Invalid("sigma must lie in (0, 1)".into()));
        }
        if !(self.gamma0 > 0.0) || !(self.cost_mult > 0.0) {
            return Err(crate::Error::Invalid("gamma0 and cost_mult must be positive".into()));
        }
        Ok(())
    }
}

/// Iterate of the primal-dual method.
#[derive(Debug, Clone, PartialEq, Serialize, Deserialize)]
pub struct PrimalDualState {
    /// Flat `[va | vm | pg | qg]`.
    pub x: Vec<f64>,
    pub lambda: Vec<f64>,
    pub mu: Vec<f64>,
    pub z: Vec<f64>,
    pub gamma: f64,
}

/// Any subset of a starting point; absent parts fall back to cold defaults.
#[derive(Debug, Clone, Default, PartialEq, Serialize, Deserialize)]
pub struct WarmStart {
    #[serde(default, skip_serializing_if = "Option::is_none")]
    pub x: Option<Vec<f64>>,
    #[serde(default, skip_serializing_if = "Option::is_none")]
    pub lambda: Option<Vec<f64>>,
    #[serde(default, skip_serializing_if = "Option::is_none")]
    pub mu: Option<Vec<f64>>,
    #[serde(default, skip_serializing_if = "Option::is_none")]
    pub z: Option<Vec<f64>>,
}

/// Solution returned by the solver, duals in the solver's internal scaling.
#[derive(Debug, Clone, PartialEq, Serialize, Deserialize)]
pub struct OpfPoint {
    pub x: OpfVector,
    pub lambda: Vec<f64>,
    pub mu: Vec<f64>,
    pub z: Vec<f64>,
    /// $/hr.
    pub objective: f64,
}

impl OpfPoint {
    pub fn as_warm_start(&self) -> WarmStart {
        WarmStart {
            x: Some(self.x.flatten()),
            lambda: Some(self.lambda.clone()),
            mu: Some(self.mu.clone()),
            z: Some(self.z.clone()),
        }
    }
}

#[derive(Debug, Clone, Copy, PartialEq, Serialize, Deserialize)]
pub struct IterationRecord {
    pub iter: usize,
    pub feascond: f64,
    pub gradcond: f64,
    pub compcond: f64,
    pub costcond: f64,
    pub step_norm: f64,
    pub gamma: f64,
}

#[derive(Debug, Clone, Copy, PartialEq, Serialize, Deserialize)]
pub struct Attempt {
    pub warm: bool,
    pub converged: bool,
    pub iterations: usize,
    pub wall_time: f64,
}

#[derive(Debug, Clone, PartialEq, Serialize, Deserialize)]
pub struct SolveReport {
    pub converged: bool,
    /// Newton iterations of the final attempt.
    pub iterations: usize,
    pub objective: f64,
    /// Conditions at the starting point, before any Newton step.
    pub initial: IterationRecord,
    pub histories: Vec<IterationRecord>,
    /// Seconds, summed over all attempts.
    pub wall_time: f64,
    pub fallback_used: bool,
    #[serde(default, skip_serializing_if = "Option::is_none")]
    pub failure: Option<String>,
    pub attempts: Vec<Attempt>,
}

impl SolveReport {
    /// Iterations summed over every attempt.
    pub fn total_iterations(&self) -> usize {
        self.attempts.iter().map(|a| a.iterations).sum()
    }

    /// Per-iteration histories as CSV.
    pub fn histories_csv(&self) -> String {
        let mut out = String::from("iter,feascond,gradcond,compcond,costcond,step_norm,gamma\n");
        for r in std::iter::once(&self.initial).chain(&self.histories) {
            out.push_str(&format!(
                "{},{:e},{:e},{:e},{:e},{:e},{:e}\n",
                r.iter, r.feascond, r.gradcond, r.compcond, r.costcond, r.step_norm, r.gamma
            ));
        }
        out
    }
}
