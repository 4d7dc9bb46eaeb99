use std::time::Instant;

use log::debug;

use super::kkt::solve_reduced;
use super::{
    Attempt, IpmOptions, IterationRecord, OpfPoint, PrimalDualState, SolveReport, WarmStart,
    Z_FLOOR,
};
use crate::error::{Error, Result};
use crate::pf::{self, Network, OpfVector};
use crate::sparse::SparseMatrix;

/// Every function value and first derivative the solver needs at one point.
#[derive(Debug, Clone)]
pub struct Evaluation {
    /// Scaled cost.
    pub f: f64,
    pub df: Vec<f64>,
    pub g: Vec<f64>,
    /// Flow rows followed by bound rows.
    pub h: Vec<f64>,
    pub jg: SparseMatrix,
    pub jh: SparseMatrix,
}

pub fn evaluate(net: &Network, x: &[f64], cost_mult: f64) -> Evaluation {
    let f = cost_mult * pf::cost_f(net, x);
    let df: Vec<f64> = pf::grad_f(net, x).into_iter().map(|v| v * cost_mult).collect();
    let g = pf::residual_g(net, x);
    let (jg, jflow) = pf::jacobians(net, x);
    let mut h = pf::inequality_h(net, x);
    let nf = h.len();
    let mut jh = SparseMatrix::new(net.dims.n_ineq, net.dims.n_x);
    jh.entries = jflow.entries;
    for (k, row) in net.bound_rows.iter().enumerate() {
        if row.upper {
            h.push(x[row.var] - row.limit);
            jh.push(nf + k, row.var, 1.0);
        } else {
            h.push(row.limit - x[row.var]);
            jh.push(nf + k, row.var, -1.0);
        }
    }
    Evaluation { f, df, g, h, jg, jh }
}

fn norm_inf(v: &[f64]) -> f64 {
    v.iter().fold(0.0, |m, x| m.max(x.abs()))
}

fn dot(a: &[f64], b: &[f64]) -> f64 {
    a.iter().zip(b).map(|(x, y)| x * y).sum()
}

fn lagrangian_gradient(ev: &Evaluation, lambda: &[f64], mu: &[f64]) -> Vec<f64> {
    let mut lx = ev.df.clone();
    for (v, w) in lx.iter_mut().zip(ev.jg.tr_mul_vec(lambda)) {
        *v += w;
    }
    for (v, w) in lx.iter_mut().zip(ev.jh.tr_mul_vec(mu)) {
        *v += w;
    }
    lx
}

/// Cold-start point: angles at the reference value, everything else at the
/// midpoint of its bounds, `λ = 0`, `z = max(1, −h)`, `μ = γ0 / z`.
pub fn cold_start(net: &Network, opts: &IpmOptions) -> PrimalDualState {
    const SURROGATE: f64 = 10.0;
    let n = net.n_bus();
    let x: Vec<f64> = (0..net.dims.n_x)
        .map(|i| {
            if i < n {
                return net.va_ref;
            }
            let (lo, hi) = (net.bounds.x_min[i], net.bounds.x_max[i]);
            let lo = if lo.is_finite() { lo } else { -SURROGATE };
            let hi = if hi.is_finite() { hi } else { SURROGATE };
            0.5 * (lo + hi)
        })
        .collect();
    let ev = evaluate(net, &x, opts.cost_mult);
    let z: Vec<f64> = ev.h.iter().map(|&h| if h < -1.0 { -h } else { 1.0 }).collect();
    let mu = z.iter().map(|z| opts.gamma0 / z).collect();
    PrimalDualState { x, lambda: vec![0.0; net.dims.n_eq], mu, z, gamma: opts.gamma0 }
}

fn check_len(what: &str, v: &[f64], n: usize) -> Result<()> {
    if v.len() != n {
        return Err(Error::Dimension(format!("warm-start {what} has length {}, expected {n}", v.len())));
    }
    Ok(())
}

/// Replaces the provided parts of a cold state, then restores interiority.
///
/// When both `z` and `μ` come from the warm start the barrier weight is set
/// from their complementarity, `γ = σ·zᵀμ / n_ineq`, otherwise it keeps the
/// cold value.
pub fn apply_warm_start(
    cold: &PrimalDualState,
    ws: &WarmStart,
    opts: &IpmOptions,
) -> Result<PrimalDualState> {
    let mut st = cold.clone();
    if let Some(x) = &ws.x {
        check_len("x", x, st.x.len())?;
        st.x = x.clone();
    }
    if let Some(l) = &ws.lambda {
        check_len("lambda", l, st.lambda.len())?;
        st.lambda = l.clone();
    }
    if let Some(m) = &ws.mu {
        check_len("mu", m, st.mu.len())?;
        st.mu = m.iter().map(|&v| v.max(0.0)).collect();
    }
    if let Some(z) = &ws.z {
        check_len("z", z, st.z.len())?;
        st.z = z.iter().map(|&v| v.max(Z_FLOOR)).collect();
        for (m, z) in st.mu.iter_mut().zip(&st.z) {
            if *m == 0.0 {
                *m = opts.gamma0 / z;
            }
        }
    }
    if ws.z.is_some() && ws.mu.is_some() && !st.z.is_empty() {
        let gamma = opts.sigma * dot(&st.z, &st.mu) / st.z.len() as f64;
        if gamma > 0.0 {
            st.gamma = gamma;
        }
    }
    Ok(st)
}

#[derive(Debug, Clone, PartialEq)]
pub struct Step {
    pub dx: Vec<f64>,
    pub dlambda: Vec<f64>,
    pub dmu: Vec<f64>,
    pub dz: Vec<f64>,
}

/// Newton direction of the perturbed KKT conditions at `state`.
pub fn newton_step(net: &Network, state: &PrimalDualState, opts: &IpmOptions) -> Result<Step> {
    let ev = evaluate(net, &state.x, opts.cost_mult);
    newton_step_at(net, state, &ev, opts)
}

fn newton_step_at(
    net: &Network,
    st: &PrimalDualState,
    ev: &Evaluation,
    opts: &IpmOptions,
) -> Result<Step> {
    let nf = net.n_flow();
    let lxx = pf::hess_lagrangian_scaled(net, &st.x, &st.lambda, &st.mu[..nf], opts.cost_mult);
    let lx = lagrangian_gradient(ev, &st.lambda, &st.mu);
    direction(&lxx, &lx, &ev.jh, &ev.h, &ev.jg, &ev.g, st)
}

fn direction(
    lxx: &SparseMatrix,
    lx: &[f64],
    jh: &SparseMatrix,
    h: &[f64],
    jg: &SparseMatrix,
    g: &[f64],
    st: &PrimalDualState,
) -> Result<Step> {
    let w: Vec<f64> = st.mu.iter().zip(&st.z).map(|(m, z)| m / z).collect();
    let t: Vec<f64> = st
        .mu
        .iter()
        .zip(h)
        .zip(&st.z)
        .map(|((m, h), z)| (m * h + st.gamma) / z)
        .collect();
    let mut n = lx.to_vec();
    for (v, u) in n.iter_mut().zip(jh.tr_mul_vec(&t)) {
        *v += u;
    }
    let (dx, dlambda) = solve_reduced(lxx, jh, &w, jg, &n, g)?;
    // z from x, then μ from x and z.
    let jdx = jh.mul_vec(&dx);
    let dz: Vec<f64> = h.iter().zip(&st.z).zip(&jdx).map(|((h, z), j)| -h - z - j).collect();
    let dmu: Vec<f64> = st
        .mu
        .iter()
        .zip(&st.z)
        .zip(&dz)
        .map(|((m, z), dz)| -m + (st.gamma - m * dz) / z)
        .collect();
    Ok(Step { dx, dlambda, dmu, dz })
}

/// Fraction-to-boundary step lengths for the primal (`z`) and dual (`μ`)
/// updates.
pub fn step_lengths(z: &[f64], dz: &[f64], mu: &[f64], dmu: &[f64], xi: f64) -> (f64, f64) {
    let ratio = |v: &[f64], dv: &[f64]| {
        v.iter()
            .zip(dv)
            .filter(|(_, &d)| d < 0.0)
            .map(|(&v, &d)| -v / d)
            .fold(f64::INFINITY, f64::min)
    };
    ((xi * ratio(z, dz)).min(1.0), (xi * ratio(mu, dmu)).min(1.0))
}

#[derive(Debug, Clone, Copy, PartialEq)]
pub struct Conditions {
    pub feascond: f64,
    pub gradcond: f64,
    pub compcond: f64,
    pub costcond: f64,
    pub converged: bool,
}

fn conditions_at(
    st: &PrimalDualState,
    ev: &Evaluation,
    f_prev: Option<f64>,
    opts: &IpmOptions,
) -> Conditions {
    let maxh = ev.h.iter().copied().fold(f64::NEG_INFINITY, f64::max);
    let xz = norm_inf(&st.x).max(norm_inf(&st.z));
    let feascond = norm_inf(&ev.g).max(maxh) / (1.0 + xz);
    let lx = lagrangian_gradient(ev, &st.lambda, &st.mu);
    let gradcond = norm_inf(&lx) / (1.0 + norm_inf(&st.lambda).max(norm_inf(&st.mu)));
    let compcond = dot(&st.z, &st.mu) / (1.0 + norm_inf(&st.x));
    let costcond = match f_prev {
        Some(f0) => (ev.f - f0).abs() / (1.0 + f0.abs()),
        None => 0.0,
    };
    let converged = feascond < opts.feastol
        && gradcond < opts.gradtol
        && compcond < opts.comptol
        && costcond < opts.costtol;
    Conditions { feascond, gradcond, compcond, costcond, converged }
}

/// The four termination measures at `state`. `f_prev` is the previous scaled
/// cost; the cost condition is skipped when it is `None`.
pub fn check_convergence(
    net: &Network,
    state: &PrimalDualState,
    f_prev: Option<f64>,
    opts: &IpmOptions,
) -> Conditions {
    let ev = evaluate(net, &state.x, opts.cost_mult);
    conditions_at(state, &ev, f_prev, opts)
}

fn record(iter: usize, c: &Conditions, step_norm: f64, gamma: f64) -> IterationRecord {
    IterationRecord {
        iter,
        feascond: c.feascond,
        gradcond: c.gradcond,
        compcond: c.compcond,
        costcond: c.costcond,
        step_norm,
        gamma,
    }
}

fn norm2(v: &[f64]) -> f64 {
    v.iter().map(|x| x * x).sum::<f64>().sqrt()
}

fn run(net: &Network, mut st: PrimalDualState, opts: &IpmOptions) -> (PrimalDualState, SolveReport) {
    let start = Instant::now();
    let mut ev = evaluate(net, &st.x, opts.cost_mult);
    let mut cond = conditions_at(&st, &ev, None, opts);
    let initial = record(0, &cond, 0.0, st.gamma);
    let mut histories = Vec::new();
    let mut failure = None;
    let niq = st.z.len();

    while !cond.converged && histories.len() < opts.max_iterations {
        let iter = histories.len() + 1;
        let mut step = match newton_step_at(net, &st, &ev, opts) {
            Ok(s) => s,
            Err(e) => {
                failure = Some(e.to_string());
                break;
            }
        };
        let dx_norm = norm2(&step.dx);
        if dx_norm > opts.max_step_size {
            failure = Some(format!("step norm {dx_norm:e} exceeds limit"));
            break;
        }
        if opts.step_control {
            backtrack(net, &st, &ev, &mut step, opts);
        }
        let (ap, ad) = step_lengths(&st.z, &step.dz, &st.mu, &step.dmu, opts.xi);
        for (v, d) in st.x.iter_mut().zip(&step.dx) {
            *v += ap * d;
        }
        for (v, d) in st.z.iter_mut().zip(&step.dz) {
            *v += ap * d;
        }
        for (v, d) in st.lambda.iter_mut().zip(&step.dlambda) {
            *v += ad * d;
        }
        for (v, d) in st.mu.iter_mut().zip(&step.dmu) {
            *v += ad * d;
        }
        if niq > 0 {
            st.gamma = opts.sigma * dot(&st.z, &st.mu) / niq as f64;
        }
        let f_prev = ev.f;
        ev = evaluate(net, &st.x, opts.cost_mult);
        let f_prev = (iter > 1).then_some(f_prev);
        cond = conditions_at(&st, &ev, f_prev, opts);
        histories.push(record(iter, &cond, norm2(&step.dx), st.gamma));
        debug!(
            "it {iter}: feas {:.2e} grad {:.2e} comp {:.2e} cost {:.2e} a=({ap:.3},{ad:.3}) gamma {:.2e}",
            cond.feascond, cond.gradcond, cond.compcond, cond.costcond, st.gamma
        );
        if cond.converged {
            break;
        }
        let bad = st.x.iter().any(|v| !v.is_finite())
            || ap < opts.alpha_min
            || ad < opts.alpha_min
            || (niq > 0 && (st.gamma < f64::EPSILON || st.gamma > 1.0 / f64::EPSILON));
        if bad {
            failure = Some(format!("iteration {iter}: step lengths ({ap:e}, {ad:e}), gamma {:e}", st.gamma));
            break;
        }
    }
    if !cond.converged && failure.is_none() {
        failure = Some(format!("no convergence in {} iterations", opts.max_iterations));
    }
    let wall_time = start.elapsed().as_secs_f64();
    let report = SolveReport {
        converged: cond.converged,
        iterations: histories.len(),
        objective: ev.f / opts.cost_mult,
        initial,
        histories,
        wall_time,
        fallback_used: false,
        failure,
        attempts: Vec::new(),
    };
    (st, report)
}

/// Halves the full step up to five times while the Lagrangian gradient norm
/// would grow.
fn backtrack(net: &Network, st: &PrimalDualState, ev: &Evaluation, step: &mut Step, opts: &IpmOptions) {
    let base = norm_inf(&lagrangian_gradient(ev, &st.lambda, &st.mu));
    let mut alpha = 1.0;
    for _ in 0..5 {
        let trial: Vec<f64> = st.x.iter().zip(&step.dx).map(|(x, d)| x + alpha * d).collect();
        let ev1 = evaluate(net, &trial, opts.cost_mult);
        if norm_inf(&lagrangian_gradient(&ev1, &st.lambda, &st.mu)) <= base {
            break;
        }
        alpha *= 0.5;
    }
    if alpha < 1.0 {
        for v in step.dx.iter_mut().chain(&mut step.dz).chain(&mut step.dlambda).chain(&mut step.dmu) {
            *v *= alpha;
        }
    }
}

fn point(net: &Network, st: PrimalDualState, objective: f64) -> OpfPoint {
    OpfPoint {
        x: OpfVector::from_flat(&st.x, net.n_bus(), net.n_gen()).expect("solver keeps x sized"),
        lambda: st.lambda,
        mu: st.mu,
        z: st.z,
        objective,
    }
}

/// Solves the OPF from a cold start or the given warm start. Failures are
/// reported through `SolveReport::converged`.
pub fn solve(net: &Network, ws: Option<&WarmStart>, opts: &IpmOptions) -> Result<(OpfPoint, SolveReport)> {
    let cold = cold_start(net, opts);
    let init = match ws {
        Some(ws) => apply_warm_start(&cold, ws, opts)?,
        None => cold,
    };
    let (st, mut report) = run(net, init, opts);
    report.attempts.push(Attempt {
        warm: ws.is_some(),
        converged: report.converged,
        iterations: report.iterations,
        wall_time: report.wall_time,
    });
    let objective = report.objective;
    Ok((point(net, st, objective), report))
}

/// Runs a warm solve and, if it fails, a cold one. Wall time covers both.
pub fn solve_with_fallback(
    net: &Network,
    ws: Option<&WarmStart>,
    opts: &IpmOptions,
) -> Result<(OpfPoint, SolveReport)> {
    let (p, r) = solve(net, ws, opts)?;
    if r.converged || ws.is_none() {
        return Ok((p, r));
    }
    let (p2, mut r2) = solve(net, None, opts)?;
    r2.fallback_used = true;
    r2.wall_time += r.wall_time;
    let mut attempts = r.attempts;
    attempts.append(&mut r2.attempts);
    r2.attempts = attempts;
    Ok((p2, r2))
}

#[cfg(test)]
mod tests {
    use super::*;
    use crate::case::fixtures::two_bus;

    #[test]
    fn one_dimensional_newton_step() {
        // minimize x² subject to 1 − x ≤ 0
        let st = PrimalDualState { x: vec![3.0], lambda: vec![], mu: vec![0.5], z: vec![1.5], gamma: 0.2 };
        let (x, mu, z, gamma) = (3.0, 0.5, 1.5, 0.2);
        let mut lxx = SparseMatrix::new(1, 1);
        lxx.push(0, 0, 2.0);
        let mut jh = SparseMatrix::new(1, 1);
        jh.push(0, 0, -1.0);
        let lx = [2.0 * x - mu];
        let h = [1.0 - x];
        let jg = SparseMatrix::new(0, 1);
        let step = direction(&lxx, &lx, &jh, &h, &jg, &[], &st).unwrap();

        // Linearised KKT in (dx, dz, dμ):
        //   2dx − dμ = −(2x − μ)
        //   −dx + dz = −(1 − x + z)
        //   μdz + zdμ = γ − zμ
        let a = nalgebra::Matrix3::new(2.0, 0.0, -1.0, -1.0, 1.0, 0.0, 0.0, mu, z);
        let b = nalgebra::Vector3::new(-(2.0 * x - mu), -(1.0 - x + z), gamma - z * mu);
        let sol = a.lu().solve(&b).unwrap();
        assert!((step.dx[0] - sol[0]).abs() < 1e-12);
        assert!((step.dz[0] - sol[1]).abs() < 1e-12);
        assert!((step.dmu[0] - sol[2]).abs() < 1e-12);
    }

    #[test]
    fn step_length_rules() {
        let (ap, ad) = step_lengths(&[1.0, 2.0], &[0.5, 0.0], &[1.0], &[1.0], 0.99995);
        assert_eq!((ap, ad), (1.0, 1.0));
        let (ap, _) = step_lengths(&[1.0], &[-2.0], &[1.0], &[0.0], 0.99995);
        assert!((ap - 0.499975).abs() < 1e-15);
        let (ap, _) = step_lengths(&[1.0, 4.0], &[-2.0, -1.0], &[], &[], 0.99995);
        assert!((ap - 0.499975).abs() < 1e-15);
    }

    #[test]
    fn cold_start_midpoints_and_slacks() {
        let net = Network::new(&two_bus()).unwrap();
        let opts = IpmOptions::default();
        let st = cold_start(&net, &opts);
        assert_eq!(&st.x[..2], &[0.0, 0.0]);
        assert!((st.x[2] - 1.0).abs() < 1e-15 && (st.x[3] - 1.0).abs() < 1e-15);
        assert_eq!(st.x[4], 1.0);
        assert_eq!(st.x[5], 0.0);
        assert!(st.lambda.iter().all(|&l| l == 0.0));
        // h on the pg upper row at the midpoint is 1.0 − 2.0 = −1 → z stays 1.
        assert!(st.z.iter().all(|&z| z >= 1.0));
        for (m, z) in st.mu.iter().zip(&st.z) {
            assert_eq!(*m, opts.gamma0 / z);
        }
        assert_eq!(st, cold_start(&net, &opts));
    }

    #[test]
    fn cold_start_raises_slack_to_minus_h() {
        let mut case = two_bus();
        case.gens[0].pmax = 1200.0;
        let net = Network::new(&case).unwrap();
        let st = cold_start(&net, &IpmOptions::default());
        // Upper pg row: x − xmax = 6 − 12 = −6.
        let row = net.n_flow() + net.bound_rows.iter().position(|r| r.upper && r.var == 4).unwrap();
        assert_eq!(st.z[row], 6.0);
        assert_eq!(st.mu[row], 1.0 / 6.0);
    }

    #[test]
    fn warm_start_rules() {
        let net = Network::new(&two_bus()).unwrap();
        let opts = IpmOptions::default();
        let cold = cold_start(&net, &opts);
        assert_eq!(apply_warm_start(&cold, &WarmStart::default(), &opts).unwrap(), cold);

        let x = vec![0.0, -0.05, 1.0, 1.0, 0.5, 0.1];
        let ws = WarmStart { x: Some(x.clone()), ..Default::default() };
        let st = apply_warm_start(&cold, &ws, &opts).unwrap();
        assert_eq!(st.x, x);
        assert_eq!((&st.lambda, &st.mu, &st.z), (&cold.lambda, &cold.mu, &cold.z));

        let mut z = vec![0.5; cold.z.len()];
        z[0] = 0.0;
        let mut mu = vec![0.2; cold.z.len()];
        mu[0] = -1.0;
        let ws = WarmStart { z: Some(z), mu: Some(mu), ..Default::default() };
        let st = apply_warm_start(&cold, &ws, &opts).unwrap();
        assert_eq!(st.z[0], Z_FLOOR);
        assert_eq!(st.mu[0], opts.gamma0 / Z_FLOOR);

        let ws = WarmStart { lambda: Some(vec![0.0; 3]), ..Default::default() };
        assert!(matches!(apply_warm_start(&cold, &ws, &opts), Err(Error::Dimension(_))));
    }
}
