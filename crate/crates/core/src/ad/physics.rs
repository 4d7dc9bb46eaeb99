//! Power-flow functions recorded on a tape, batched over rows.

use std::sync::Arc;

use super::{SparseOperand, Tape, Tensor, Var};
use crate::error::Result;
use crate::pf::Network;
use crate::sparse::SparseMatrix;

/// Constant operands of the differentiable power-flow kernels.
#[derive(Debug, Clone)]
pub struct PhysicsOperands {
    pub n_bus: usize,
    pub n_gen: usize,
    pub n_rated: usize,
    g_bus: Arc<SparseOperand>,
    b_bus: Arc<SparseOperand>,
    cg: Arc<SparseOperand>,
    g_f: Arc<SparseOperand>,
    b_f: Arc<SparseOperand>,
    g_t: Arc<SparseOperand>,
    b_t: Arc<SparseOperand>,
    c_f: Arc<SparseOperand>,
    c_t: Arc<SparseOperand>,
    limit_sq: Tensor,
    /// Per-generator coefficients, highest order first, padded to one length.
    coeffs: Vec<Tensor>,
    base_mva: f64,
}

impl PhysicsOperands {
    pub fn new(net: &Network) -> Self {
        let n = net.n_bus();
        let nr = net.rated.len();
        let (g_bus, b_bus) = net.ybus.split();
        let mut mats: [SparseMatrix; 6] = std::array::from_fn(|_| SparseMatrix::new(nr, n));
        for (r, rb) in net.rated.iter().enumerate() {
            let a = &net.branches[rb.adm];
            let [gf, bf, gt, bt, cf, ct] = &mut mats;
            gf.push(r, a.from, a.yff.re);
            gf.push(r, a.to, a.yft.re);
            bf.push(r, a.from, a.yff.im);
            bf.push(r, a.to, a.yft.im);
            gt.push(r, a.to, a.ytt.re);
            gt.push(r, a.from, a.ytf.re);
            bt.push(r, a.to, a.ytt.im);
            bt.push(r, a.from, a.ytf.im);
            cf.push(r, a.from, 1.0);
            ct.push(r, a.to, 1.0);
        }
        let lim: Vec<f64> = net.rated.iter().map(|r| r.limit_sq).collect();
        let limit_sq = Tensor::row(&[lim.clone(), lim].concat());
        let order = net.cost.iter().map(Vec::len).max().unwrap_or(0);
        let coeffs = (0..order)
            .map(|k| {
                let row: Vec<f64> = net
                    .cost
                    .iter()
                    .map(|c| {
                        let pad = order - c.len();
                        if k < pad { 0.0 } else { c[k - pad] }
                    })
                    .collect();
                Tensor::row(&row)
            })
            .collect();
        let op = |m: &SparseMatrix| Arc::new(SparseOperand::from_coo(m));
        Self {
            n_bus: n,
            n_gen: net.n_gen(),
            n_rated: nr,
            g_bus: op(&g_bus),
            b_bus: op(&b_bus),
            cg: op(&net.cg),
            g_f: op(&mats[0]),
            b_f: op(&mats[1]),
            g_t: op(&mats[2]),
            b_t: op(&mats[3]),
            c_f: op(&mats[4]),
            c_t: op(&mats[5]),
            limit_sq,
            coeffs,
            base_mva: net.base_mva,
        }
    }
}

/// Rectangular voltage components `(e, f)`.
fn rectangular(tape: &mut Tape, va: Var, vm: Var) -> Result<(Var, Var)> {
    let c = tape.cos(va)?;
    let s = tape.sin(va)?;
    Ok((tape.mul(vm, c)?, tape.mul(vm, s)?))
}

/// `(P, Q)` of `V_side · conj((G + jB) V)`.
fn injection(
    tape: &mut Tape,
    g: &Arc<SparseOperand>,
    b: &Arc<SparseOperand>,
    (e, f): (Var, Var),
    (es, fs): (Var, Var),
) -> Result<(Var, Var)> {
    let ge = tape.spmm(e, g)?;
    let bf = tape.spmm(f, b)?;
    let be = tape.spmm(e, b)?;
    let gf = tape.spmm(f, g)?;
    let ir = tape.sub(ge, bf)?;
    let ii = tape.add(be, gf)?;
    let p1 = tape.mul(es, ir)?;
    let p2 = tape.mul(fs, ii)?;
    let q1 = tape.mul(fs, ir)?;
    let q2 = tape.mul(es, ii)?;
    Ok((tape.add(p1, p2)?, tape.sub(q1, q2)?))
}

/// Active and reactive nodal balance residuals
/// `P_bus + P_d − Cg·P_g` and `Q_bus + Q_d − Cg·Q_g`, in p.u.
#[allow(clippy::too_many_arguments)]
pub fn ac_residual(
    tape: &mut Tape,
    ops: &PhysicsOperands,
    pd: Var,
    qd: Var,
    va: Var,
    vm: Var,
    pg: Var,
    qg: Var,
) -> Result<(Var, Var)> {
    let ef = rectangular(tape, va, vm)?;
    let (p, q) = injection(tape, &ops.g_bus, &ops.b_bus, ef, ef)?;
    let pgb = tape.spmm(pg, &ops.cg)?;
    let qgb = tape.spmm(qg, &ops.cg)?;
    let p = tape.add(p, pd)?;
    let q = tape.add(q, qd)?;
    Ok((tape.sub(p, pgb)?, tape.sub(q, qgb)?))
}

/// Flow rows `|S|² − rate²`, from-ends then to-ends of the rated branches.
pub fn flow_h(tape: &mut Tape, ops: &PhysicsOperands, va: Var, vm: Var) -> Result<Var> {
    let (e, f) = rectangular(tape, va, vm)?;
    let mut sides = Vec::with_capacity(2);
    for (g, b, c) in [(&ops.g_f, &ops.b_f, &ops.c_f), (&ops.g_t, &ops.b_t, &ops.c_t)] {
        let es = tape.spmm(e, c)?;
        let fs = tape.spmm(f, c)?;
        let (p, q) = injection(tape, g, b, (e, f), (es, fs))?;
        let p2 = tape.square(p)?;
        let q2 = tape.square(q)?;
        sides.push(tape.add(p2, q2)?);
    }
    let s2 = tape.concat(&sides)?;
    let lim = tape.leaf(ops.limit_sq.clone());
    tape.sub(s2, lim)
}

/// Total generation cost per row in $/hr, with `pg` in p.u.
pub fn cost_poly(tape: &mut Tape, ops: &PhysicsOperands, pg: Var) -> Result<Var> {
    let p = tape.scale(pg, ops.base_mva)?;
    let Some((first, rest)) = ops.coeffs.split_first() else {
        let zero = tape.scale(p, 0.0)?;
        return tape.row_sum(zero);
    };
    let c0 = tape.leaf(first.clone());
    let zero = tape.scale(p, 0.0)?;
    let mut acc = tape.add(zero, c0)?;
    for c in rest {
        let ck = tape.leaf(c.clone());
        let ap = tape.mul(acc, p)?;
        acc = tape.add(ap, ck)?;
    }
    tape.row_sum(acc)
}
