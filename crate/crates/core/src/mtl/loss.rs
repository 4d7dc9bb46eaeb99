use std::sync::Arc;

use serde::{Deserialize, Serialize};

use super::normalize::Normalizer;
use super::Task;
use crate::ad::{ac_residual, cost_poly, flow_h, PhysicsOperands, SparseOperand, Tape, Tensor, Var};
use crate::error::{Error, Result};
use crate::pf::Network;
use crate::sparse::SparseMatrix;

pub const EPSILON: f64 = 1e-9;
const EXP_CLIP: f64 = 30.0;

/// A physics term's switch and weight.
#[derive(Debug, Clone, Copy, PartialEq, Serialize, Deserialize)]
pub struct Term {
    pub on: bool,
    pub weight: f64,
}

impl Default for Term {
    fn default() -> Self {
        Self { on: true, weight: 1.0 }
    }
}

#[derive(Debug, Clone, PartialEq, Serialize, Deserialize)]
#[serde(default)]
pub struct LossWeights {
    /// Supervised weight per task, in [`Task::ALL`] order.
    pub task: [f64; 7],
    pub eqn: Term,
    pub ieq: Term,
    pub lag: Term,
    pub cost: Term,
    pub epsilon: f64,
}

impl Default for LossWeights {
    fn default() -> Self {
        Self {
            task: [1.0; 7],
            eqn: Term::default(),
            ieq: Term::default(),
            lag: Term::default(),
            cost: Term::default(),
            epsilon: EPSILON,
        }
    }
}

impl LossWeights {
    pub fn supervised_only() -> Self {
        let off = Term { on: false, weight: 1.0 };
        Self { eqn: off, ieq: off, lag: off, cost: off, ..Self::default() }
    }

    pub fn physics_on(&self) -> bool {
        [self.eqn, self.ieq, self.lag, self.cost].iter().any(|t| t.on)
    }

    pub fn validate(&self) -> Result<()> {
        let all = self.task.iter().chain([&self.eqn.weight, &self.ieq.weight, &self.lag.weight, &self.cost.weight]);
        if all.clone().any(|w| !(*w >= 0.0)) || !(self.epsilon > 0.0) {
            return Err(Error::Invalid("loss weights must be non-negative".into()));
        }
        Ok(())
    }
}

/// Constant operands for the physics losses of one network.
#[derive(Debug, Clone)]
pub struct Physics {
    pub ops: PhysicsOperands,
    upper: Arc<SparseOperand>,
    upper_lim: Tensor,
    lower: Arc<SparseOperand>,
    lower_lim: Tensor,
    n_eq_balance: usize,
}

impl Physics {
    pub fn new(net: &Network) -> Self {
        let nx = net.dims.n_x;
        let rows = |upper: bool| {
            let sel: Vec<_> = net.bound_rows.iter().filter(|r| r.upper == upper).collect();
            let mut m = SparseMatrix::new(sel.len(), nx);
            for (k, r) in sel.iter().enumerate() {
                m.push(k, r.var, 1.0);
            }
            let lim: Vec<f64> = sel.iter().map(|r| r.limit).collect();
            (Arc::new(SparseOperand::from_coo(&m)), Tensor::row(&lim))
        };
        let (upper, upper_lim) = rows(true);
        let (lower, lower_lim) = rows(false);
        Self { ops: PhysicsOperands::new(net), upper, upper_lim, lower, lower_lim, n_eq_balance: 2 * net.n_bus() }
    }
}

/// Denormalized (physical, p.u.) predictions on the tape.
#[derive(Debug, Clone, Copy)]
pub struct Physical {
    pub va: Var,
    pub vm: Var,
    pub pg: Var,
    pub qg: Var,
    pub lambda: Var,
    pub mu: Var,
    pub z: Var,
}

impl Physical {
    pub fn x(&self, tape: &mut Tape) -> Result<Var> {
        tape.concat(&[self.va, self.vm, self.pg, self.qg])
    }
}

/// `y · scale + shift` per feature.
pub fn denormalize(tape: &mut Tape, y: Var, n: &Normalizer) -> Result<Var> {
    let k = tape.leaf(Tensor::row(&n.scale));
    let s = tape.leaf(Tensor::row(&n.shift));
    let m = tape.mul(y, k)?;
    tape.add(m, s)
}

pub fn denormalize_all(tape: &mut Tape, out: &[Var; 7], norms: &[Normalizer]) -> Result<Physical> {
    let mut d = [out[0]; 7];
    for t in Task::ALL {
        d[t.index()] = denormalize(tape, out[t.index()], &norms[t.index()])?;
    }
    Ok(Physical {
        va: d[Task::Va.index()],
        vm: d[Task::Vm.index()],
        pg: d[Task::Pg.index()],
        qg: d[Task::Qg.index()],
        lambda: d[Task::Lambda.index()],
        mu: d[Task::Mu.index()],
        z: d[Task::Z.index()],
    })
}

/// Charbonnier regression loss averaged over tasks.
pub fn loss_supervised(tape: &mut Tape, pred: &[Var; 7], truth: &[Var; 7], w: &[f64; 7], eps: f64) -> Result<Var> {
    let mut acc: Option<Var> = None;
    for k in 0..7 {
        let d = tape.sub(pred[k], truth[k])?;
        let a = tape.smooth_abs(d, eps)?;
        let m = tape.mean(a)?;
        let m = tape.scale(m, w[k] / 7.0)?;
        acc = Some(match acc {
            Some(v) => tape.add(v, m)?,
            None => m,
        });
    }
    Ok(acc.expect("seven tasks"))
}

/// Mean absolute nodal balance mismatch, active plus reactive.
pub fn loss_ac(tape: &mut Tape, phys: &Physics, p: &Physical, pd: Var, qd: Var, eps: f64) -> Result<Var> {
    let (gp, gq) = ac_residual(tape, &phys.ops, pd, qd, p.va, p.vm, p.pg, p.qg)?;
    let ap = tape.smooth_abs(gp, eps)?;
    let aq = tape.smooth_abs(gq, eps)?;
    let mp = tape.mean(ap)?;
    let mq = tape.mean(aq)?;
    tape.add(mp, mq)
}

fn exp_mean(tape: &mut Tape, v: Var) -> Result<Option<Var>> {
    if tape.value(v).is_empty() {
        return Ok(None);
    }
    let c = tape.clamp_max(v, EXP_CLIP)?;
    let e = tape.exp(c)?;
    Ok(Some(tape.mean(e)?))
}

/// Bound-row values `x − x_max` and `x_min − x` (≤ 0 when feasible).
fn bound_rows(tape: &mut Tape, phys: &Physics, x: Var) -> Result<(Var, Var)> {
    let xu = tape.spmm(x, &phys.upper)?;
    let lu = tape.leaf(phys.upper_lim.clone());
    let up = tape.sub(xu, lu)?;
    let xl = tape.spmm(x, &phys.lower)?;
    let ll = tape.leaf(phys.lower_lim.clone());
    let neg = tape.scale(xl, -1.0)?;
    let lo = tape.add(neg, ll)?;
    Ok((up, lo))
}

/// Sum over the flow, upper-bound and lower-bound families of the mean
/// exponential penalty, exponents clipped at 30.
pub fn loss_ieq(tape: &mut Tape, phys: &Physics, p: &Physical) -> Result<Var> {
    let h = flow_h(tape, &phys.ops, p.va, p.vm)?;
    let x = p.x(tape)?;
    let (up, lo) = bound_rows(tape, phys, x)?;
    let mut acc: Option<Var> = None;
    for v in [h, up, lo] {
        if let Some(m) = exp_mean(tape, v)? {
            acc = Some(match acc {
                Some(a) => tape.add(a, m)?,
                None => m,
            });
        }
    }
    match acc {
        Some(a) => Ok(a),
        None => {
            let z = tape.scale(x, 0.0)?;
            tape.mean(z)
        }
    }
}

/// `|f(pg) − f0| / (1 + |f0|)`, averaged over rows. `f0` is a column.
pub fn loss_cost(tape: &mut Tape, phys: &Physics, pg: Var, f0: &[f64], eps: f64) -> Result<Var> {
    let f = cost_poly(tape, &phys.ops, pg)?;
    let col = |v: Vec<f64>| Tensor { rows: v.len(), cols: 1, data: v };
    let f0v = tape.leaf(col(f0.to_vec()));
    let inv = tape.leaf(col(f0.iter().map(|f| 1.0 / (1.0 + f.abs())).collect()));
    let d = tape.sub(f, f0v)?;
    let a = tape.smooth_abs(d, eps)?;
    let r = tape.mul(a, inv)?;
    tape.mean(r)
}

/// Lagrangian consistency `(|λᵀg| + |μᵀ(h + z)|) / 2`, averaged over rows,
/// with `h` the solver's full inequality vector.
pub fn loss_lag(tape: &mut Tape, phys: &Physics, p: &Physical, pd: Var, qd: Var, eps: f64) -> Result<Var> {
    let (gp, gq) = ac_residual(tape, &phys.ops, pd, qd, p.va, p.vm, p.pg, p.qg)?;
    let g = tape.concat(&[gp, gq])?;
    let lam = tape.slice(p.lambda, 0, phys.n_eq_balance)?;
    let lg = tape.mul(lam, g)?;
    let t1 = tape.row_sum(lg)?;
    let flow = flow_h(tape, &phys.ops, p.va, p.vm)?;
    let x = p.x(tape)?;
    let (up, lo) = bound_rows(tape, phys, x)?;
    let h = tape.concat(&[flow, up, lo])?;
    let hz = tape.add(h, p.z)?;
    let mhz = tape.mul(p.mu, hz)?;
    let t2 = tape.row_sum(mhz)?;
    let a1 = tape.smooth_abs(t1, eps)?;
    let a2 = tape.smooth_abs(t2, eps)?;
    let s = tape.add(a1, a2)?;
    let m = tape.mean(s)?;
    tape.scale(m, 0.5)
}

/// Every loss term of one batch. Disabled physics terms are `None`.
#[derive(Debug, Clone, Copy)]
pub struct LossTerms {
    pub supervised: Var,
    pub eqn: Option<Var>,
    pub ieq: Option<Var>,
    pub lag: Option<Var>,
    pub cost: Option<Var>,
    pub total: Var,
}

/// Batch data in the form the losses consume.
pub struct BatchData<'a> {
    /// Normalized targets per task.
    pub targets: &'a [Tensor; 7],
    /// Loads in p.u.
    pub pd: &'a Tensor,
    pub qd: &'a Tensor,
    pub f0: &'a [f64],
}

fn named(term: &'static str) -> impl Fn(Error) -> Error {
    move |e| match e {
        Error::NonFinite(m) => Error::NonFinite(format!("{term} loss: {m}")),
        other => other,
    }
}

/// Weighted total `L + L_eqn + L_ieq + L_lag + L_f`.
pub fn loss_total(
    tape: &mut Tape,
    phys: &Physics,
    norms: &[Normalizer],
    out: &[Var; 7],
    batch: &BatchData<'_>,
    w: &LossWeights,
) -> Result<LossTerms> {
    let truth: [Var; 7] = std::array::from_fn(|k| tape.leaf(batch.targets[k].clone()));
    let supervised = loss_supervised(tape, out, &truth, &w.task, w.epsilon).map_err(named("supervised"))?;
    let mut terms = LossTerms { supervised, eqn: None, ieq: None, lag: None, cost: None, total: supervised };
    if !w.physics_on() {
        return Ok(terms);
    }
    let p = denormalize_all(tape, out, norms)?;
    let pd = tape.leaf(batch.pd.clone());
    let qd = tape.leaf(batch.qd.clone());
    if w.eqn.on {
        terms.eqn = Some(loss_ac(tape, phys, &p, pd, qd, w.epsilon).map_err(named("eqn"))?);
    }
    if w.ieq.on {
        terms.ieq = Some(loss_ieq(tape, phys, &p).map_err(named("ieq"))?);
    }
    if w.lag.on {
        terms.lag = Some(loss_lag(tape, phys, &p, pd, qd, w.epsilon).map_err(named("lag"))?);
    }
    if w.cost.on {
        terms.cost = Some(loss_cost(tape, phys, p.pg, batch.f0, w.epsilon).map_err(named("cost"))?);
    }
    let mut total = supervised;
    for (v, t) in [(terms.eqn, w.eqn), (terms.ieq, w.ieq), (terms.lag, w.lag), (terms.cost, w.cost)] {
        if let Some(v) = v {
            let s = tape.scale(v, t.weight)?;
            total = tape.add(total, s)?;
        }
    }
    terms.total = total;
    Ok(terms)
}

#[cfg(test)]
mod tests {
    use super::*;

    fn leaf_rows(t: &mut Tape, rows: &[&[f64]]) -> Var {
        t.leaf(Tensor::from_rows(rows).unwrap())
    }

    #[test]
    fn supervised_at_truth_is_epsilon() {
        let mut t = Tape::new();
        let a: [Var; 7] = std::array::from_fn(|k| leaf_rows(&mut t, &[&[k as f64, 1.0]]));
        let l = loss_supervised(&mut t, &a, &a, &[1.0; 7], EPSILON).unwrap();
        assert!((t.value(l).item() - 1e-9).abs() < 1e-20);
    }

    #[test]
    fn supervised_scales_with_task_weight() {
        let mut t = Tape::new();
        let p: [Var; 7] = std::array::from_fn(|k| leaf_rows(&mut t, &[&[if k == 2 { 3e-3 } else { 0.0 }]]));
        let g: [Var; 7] = std::array::from_fn(|_| leaf_rows(&mut t, &[&[0.0]]));
        let one = loss_supervised(&mut t, &p, &g, &[1.0; 7], EPSILON).unwrap();
        let mut w = [1.0; 7];
        w[2] = 2.0;
        let two = loss_supervised(&mut t, &p, &g, &w, EPSILON).unwrap();
        let base = 6.0 * 1e-9 / 7.0;
        let c1 = t.value(one).item() - base;
        let c2 = t.value(two).item() - base;
        assert!((c1 - (3e-3f64).hypot(1e-9) / 7.0).abs() < 1e-15);
        assert!((c2 - 2.0 * c1).abs() < 1e-15);
        let mut t2 = Tape::new();
        let p1 = [leaf_rows(&mut t2, &[&[3e-3]]); 7];
        let g1 = [leaf_rows(&mut t2, &[&[0.0]]); 7];
        let l = loss_supervised(&mut t2, &p1, &g1, &[1.0; 7], EPSILON).unwrap();
        assert!((t2.value(l).item() - 3e-3).abs() < 1e-12);
    }
}
