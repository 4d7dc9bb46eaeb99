use num_complex::Complex64;

use super::terms::{term, term_hess, TH_I, TH_K, VM_I, VM_K};
use super::Network;
use crate::sparse::{SparseComplexMatrix, SparseMatrix};

/// `S = diag(V) · conj(Ybus · V)` with `V = vm · e^{j·va}`.
pub fn bus_injections(ybus: &SparseComplexMatrix, va: &[f64], vm: &[f64]) -> Vec<Complex64> {
    let v: Vec<Complex64> = va.iter().zip(vm).map(|(&a, &m)| Complex64::from_polar(m, a)).collect();
    let i = ybus.mul_vec(&v);
    v.iter().zip(&i).map(|(v, i)| v * i.conj()).collect()
}

/// Equality residuals: active balance rows, reactive balance rows and the
/// reference-angle row.
pub fn residual_g(net: &Network, x: &[f64]) -> Vec<f64> {
    let n = net.n_bus();
    let s = bus_injections(&net.ybus, net.va(x), net.vm(x));
    let mut g = Vec::with_capacity(2 * n + 1);
    g.extend((0..n).map(|i| s[i].re + net.pd[i]));
    g.extend((0..n).map(|i| s[i].im + net.qd[i]));
    for (j, &b) in net.gen_bus.iter().enumerate() {
        g[b] -= net.pg(x)[j];
        g[n + b] -= net.qg(x)[j];
    }
    g.push(net.va(x)[net.ref_bus] - net.va_ref);
    g
}

/// Local state of one branch: `(θ_f, θ_t, |V_f|, |V_t|)`.
fn branch_locals(net: &Network, x: &[f64], f: usize, t: usize) -> [f64; 4] {
    let va = net.va(x);
    let vm = net.vm(x);
    [va[f], va[t], vm[f], vm[t]]
}

/// Slot maps for the two terms making up each branch end, expressed in the
/// branch-local variable order `(θ_f, θ_t, |V_f|, |V_t|)`.
const FROM_SELF: [usize; 4] = [0, 0, 2, 2];
const FROM_OTHER: [usize; 4] = [0, 1, 2, 3];
const TO_SELF: [usize; 4] = [1, 1, 3, 3];
const TO_OTHER: [usize; 4] = [1, 0, 3, 2];

struct EndFlow {
    p: f64,
    q: f64,
    dp: [f64; 4],
    dq: [f64; 4],
}

fn end_flow(
    y_self: Complex64,
    y_other: Complex64,
    loc: &[f64; 4],
    maps: (&[usize; 4], &[usize; 4]),
) -> EndFlow {
    let mut out = EndFlow { p: 0.0, q: 0.0, dp: [0.0; 4], dq: [0.0; 4] };
    for (y, map) in [(y_self, maps.0), (y_other, maps.1)] {
        let t = term(y, loc[map[TH_I]], loc[map[TH_K]], loc[map[VM_I]], loc[map[VM_K]]);
        out.p += t.p;
        out.q += t.q;
        for s in 0..4 {
            out.dp[map[s]] += t.dp[s];
            out.dq[map[s]] += t.dq[s];
        }
    }
    out
}

fn end_hess(
    y_self: Complex64,
    y_other: Complex64,
    loc: &[f64; 4],
    maps: (&[usize; 4], &[usize; 4]),
) -> ([[f64; 4]; 4], [[f64; 4]; 4]) {
    let mut hp = [[0.0; 4]; 4];
    let mut hq = [[0.0; 4]; 4];
    for (y, map) in [(y_self, maps.0), (y_other, maps.1)] {
        let h = term_hess(y, loc[map[TH_I]], loc[map[TH_K]], loc[map[VM_I]], loc[map[VM_K]]);
        for a in 0..4 {
            for b in 0..4 {
                hp[map[a]][map[b]] += h.d2p[a][b];
                hq[map[a]][map[b]] += h.d2q[a][b];
            }
        }
    }
    (hp, hq)
}

fn branch_ends(net: &Network, r: usize, x: &[f64]) -> ([f64; 4], [usize; 4], EndFlow, EndFlow) {
    let a = &net.branches[net.rated[r].adm];
    let loc = branch_locals(net, x, a.from, a.to);
    let n = net.n_bus();
    let cols = [a.from, a.to, n + a.from, n + a.to];
    let ef = end_flow(a.yff, a.yft, &loc, (&FROM_SELF, &FROM_OTHER));
    let et = end_flow(a.ytt, a.ytf, &loc, (&TO_SELF, &TO_OTHER));
    (loc, cols, ef, et)
}

/// Branch-flow inequalities `|S|² − rate² ≤ 0`: all from-end rows, then all
/// to-end rows, over rated in-service branches.
pub fn inequality_h(net: &Network, x: &[f64]) -> Vec<f64> {
    let nr = net.rated.len();
    let mut h = vec![0.0; 2 * nr];
    for r in 0..nr {
        let (_, _, ef, et) = branch_ends(net, r, x);
        let lim = net.rated[r].limit_sq;
        h[r] = ef.p * ef.p + ef.q * ef.q - lim;
        h[nr + r] = et.p * et.p + et.q * et.q - lim;
    }
    h
}

fn poly(c: &[f64], x: f64) -> f64 {
    c.iter().fold(0.0, |acc, &k| acc * x + k)
}

fn poly_d1(c: &[f64], x: f64) -> f64 {
    let deg = c.len() - 1;
    c.iter()
        .take(deg)
        .enumerate()
        .fold(0.0, |acc, (i, &k)| acc * x + k * (deg - i) as f64)
}

fn poly_d2(c: &[f64], x: f64) -> f64 {
    let deg = c.len() - 1;
    if deg < 2 {
        return 0.0;
    }
    c.iter()
        .take(deg - 1)
        .enumerate()
        .fold(0.0, |acc, (i, &k)| acc * x + k * ((deg - i) * (deg - i - 1)) as f64)
}

/// Total generation cost in $/hr.
pub fn cost_f(net: &Network, x: &[f64]) -> f64 {
    net.pg(x)
        .iter()
        .zip(&net.cost)
        .map(|(&p, c)| poly(c, p * net.base_mva))
        .sum()
}

pub fn grad_f(net: &Network, x: &[f64]) -> Vec<f64> {
    let mut g = vec![0.0; net.dims.n_x];
    let off = net.offsets()[2];
    for (j, (&p, c)) in net.pg(x).iter().zip(&net.cost).enumerate() {
        g[off + j] = net.base_mva * poly_d1(c, p * net.base_mva);
    }
    g
}

/// Jacobians of the equality residuals and of the branch-flow rows.
pub fn jacobians(net: &Network, x: &[f64]) -> (SparseMatrix, SparseMatrix) {
    let n = net.n_bus();
    let [_, _, opg, oqg] = net.offsets();
    let va = net.va(x);
    let vm = net.vm(x);
    let mut jg = SparseMatrix::new(net.dims.n_eq, net.dims.n_x);
    for &(i, k, y) in &net.ybus.entries {
        let t = term(y, va[i], va[k], vm[i], vm[k]);
        let cols = [i, k, n + i, n + k];
        for s in 0..4 {
            jg.push(i, cols[s], t.dp[s]);
            jg.push(n + i, cols[s], t.dq[s]);
        }
    }
    for (j, &b) in net.gen_bus.iter().enumerate() {
        jg.push(b, opg + j, -1.0);
        jg.push(n + b, oqg + j, -1.0);
    }
    jg.push(2 * n, net.ref_bus, 1.0);
    jg.compress();
    (jg, flow_jacobian(net, x))
}

pub fn flow_jacobian(net: &Network, x: &[f64]) -> SparseMatrix {
    let nr = net.rated.len();
    let mut jh = SparseMatrix::new(2 * nr, net.dims.n_x);
    for r in 0..nr {
        let (_, cols, ef, et) = branch_ends(net, r, x);
        for s in 0..4 {
            jh.push(r, cols[s], 2.0 * (ef.p * ef.dp[s] + ef.q * ef.dq[s]));
            jh.push(nr + r, cols[s], 2.0 * (et.p * et.dp[s] + et.q * et.dq[s]));
        }
    }
    jh.compress();
    jh
}

/// Hessian of `f + λᵀg + μᵀh` with `μ` over the branch-flow rows.
pub fn hess_lagrangian(net: &Network, x: &[f64], lambda: &[f64], mu: &[f64]) -> SparseMatrix {
    hess_lagrangian_scaled(net, x, lambda, mu, 1.0)
}

/// As [`hess_lagrangian`] with the cost term multiplied by `cost_mult`.
pub fn hess_lagrangian_scaled(
    net: &Network,
    x: &[f64],
    lambda: &[f64],
    mu: &[f64],
    cost_mult: f64,
) -> SparseMatrix {
    let n = net.n_bus();
    let nr = net.rated.len();
    let va = net.va(x);
    let vm = net.vm(x);
    let mut hs = SparseMatrix::new(net.dims.n_x, net.dims.n_x);

    let opg = net.offsets()[2];
    for (j, (&p, c)) in net.pg(x).iter().zip(&net.cost).enumerate() {
        let d2 = cost_mult * net.base_mva * net.base_mva * poly_d2(c, p * net.base_mva);
        if d2 != 0.0 {
            hs.push(opg + j, opg + j, d2);
        }
    }

    for &(i, k, y) in &net.ybus.entries {
        let (wp, wq) = (lambda[i], lambda[n + i]);
        if wp == 0.0 && wq == 0.0 {
            continue;
        }
        let h = term_hess(y, va[i], va[k], vm[i], vm[k]);
        let cols = [i, k, n + i, n + k];
        for a in 0..4 {
            for b in 0..4 {
                let v = wp * h.d2p[a][b] + wq * h.d2q[a][b];
                if v != 0.0 {
                    hs.push(cols[a], cols[b], v);
                }
            }
        }
    }

    for r in 0..nr {
        for (row, to_end) in [(r, false), (nr + r, true)] {
            let w = mu[row];
            if w == 0.0 {
                continue;
            }
            let (loc, cols, ef, et) = branch_ends(net, r, x);
            let a = &net.branches[net.rated[r].adm];
            let (e, (hp, hq)) = if to_end {
                (et, end_hess(a.ytt, a.ytf, &loc, (&TO_SELF, &TO_OTHER)))
            } else {
                (ef, end_hess(a.yff, a.yft, &loc, (&FROM_SELF, &FROM_OTHER)))
            };
            for s in 0..4 {
                for t in 0..4 {
                    let v = 2.0
                        * (e.dp[s] * e.dp[t] + e.p * hp[s][t] + e.dq[s] * e.dq[t] + e.q * hq[s][t]);
                    hs.push(cols[s], cols[t], w * v);
                }
            }
        }
    }
    hs.compress();
    hs
}

#[cfg(test)]
mod tests {
    use super::*;
    use crate::case::fixtures::two_bus;
    use crate::case::GridCase;

    fn flat(net: &Network, va: &[f64], vm: &[f64], pg: &[f64], qg: &[f64]) -> Vec<f64> {
        assert_eq!(va.len(), net.n_bus());
        [va, vm, pg, qg].concat()
    }

    #[test]
    fn flat_start_shunt_free_is_zero() {
        let net = Network::new(&two_bus()).unwrap();
        let s = bus_injections(&net.ybus, &[0.0, 0.0], &[1.0, 1.0]);
        assert!(s.iter().all(|s| s.norm() < 1e-15));
    }

    #[test]
    fn two_bus_injection_by_hand() {
        let net = Network::new(&two_bus()).unwrap();
        let s = bus_injections(&net.ybus, &[0.0, -0.1], &[1.0, 1.0]);
        // S1 = V1·conj(−10j·V1 + 10j·V2) with V1 = 1, V2 = e^{−0.1j}.
        let v2 = Complex64::from_polar(1.0, -0.1);
        let j10 = Complex64::new(0.0, 10.0);
        let s1 = (-j10 + j10 * v2).conj();
        let s2 = v2 * (j10 - j10 * v2).conj();
        assert!((s[0] - s1).norm() < 1e-14);
        assert!((s[1] - s2).norm() < 1e-14);
        assert!((s[0].re - 10.0 * 0.1f64.sin()).abs() < 1e-14);
    }

    #[test]
    fn residual_is_finite_at_zero_voltage() {
        let net = Network::new(&two_bus()).unwrap();
        let x = flat(&net, &[0.0, 0.0], &[0.0, 0.0], &[0.0], &[0.0]);
        let g = residual_g(&net, &x);
        assert!(g.iter().all(|v| v.is_finite()));
        assert_eq!(g[1], 0.5);
        assert_eq!(g[3], 0.1);
    }

    #[test]
    fn open_branch_has_no_flow_rows() {
        let mut case = two_bus();
        case.branches[0].status = false;
        let net = Network::new(&case).unwrap();
        let x = flat(&net, &[0.0, 0.0], &[1.0, 1.0], &[0.0], &[0.0]);
        assert!(inequality_h(&net, &x).is_empty());
        let (_, jh) = jacobians(&net, &x);
        assert_eq!(jh.n_rows, 0);
    }

    #[test]
    fn unloaded_flat_flows_are_minus_rate_squared() {
        let mut case: GridCase = two_bus();
        case.buses[1].pd = 0.0;
        case.buses[1].qd = 0.0;
        let net = Network::new(&case).unwrap();
        let x = flat(&net, &[0.0, 0.0], &[1.0, 1.0], &[0.0], &[0.0]);
        assert_eq!(inequality_h(&net, &x), vec![-1.0, -1.0]);
    }

    #[test]
    fn cost_by_direct_substitution() {
        let net = Network::new(&two_bus()).unwrap();
        let x = flat(&net, &[0.0, 0.0], &[1.0, 1.0], &[1.0], &[0.0]);
        assert_eq!(cost_f(&net, &x), 3100.0);
        let g = grad_f(&net, &x);
        assert_eq!(g, vec![0.0, 0.0, 0.0, 0.0, 100.0 * (0.2 * 100.0 + 20.0), 0.0]);
    }

    #[test]
    fn zero_cost_coefficients() {
        let mut case = two_bus();
        case.gens[0].cost = vec![0.0, 0.0, 0.0];
        let net = Network::new(&case).unwrap();
        let x = flat(&net, &[0.0, 0.0], &[1.0, 1.0], &[1.3], &[0.0]);
        assert_eq!(cost_f(&net, &x), 0.0);
        assert!(grad_f(&net, &x).iter().all(|&v| v == 0.0));
    }

    #[test]
    fn cost_only_curvature() {
        let net = Network::new(&two_bus()).unwrap();
        let x = flat(&net, &[0.0, -0.05], &[1.0, 0.98], &[0.5], &[0.1]);
        let h = hess_lagrangian(&net, &x, &[0.0; 5], &[0.0, 0.0]);
        assert_eq!(h.entries, vec![(4, 4, 2.0 * 0.1 * 100.0 * 100.0)]);
    }

    #[test]
    fn generator_columns_are_minus_cg() {
        let net = Network::new(&two_bus()).unwrap();
        let x = flat(&net, &[0.0, -0.05], &[1.0, 0.98], &[0.5], &[0.1]);
        let (jg, _) = jacobians(&net, &x);
        let d = jg.to_dense();
        assert_eq!(d[0][4], -1.0);
        assert_eq!(d[1][4], 0.0);
        assert_eq!(d[2][5], -1.0);
        assert_eq!(d[4][0], 1.0);
    }

    #[test]
    fn polynomial_helpers() {
        let c = [2.0, -3.0, 5.0, 7.0];
        let x = 1.5;
        assert_eq!(poly(&c, x), 2.0 * x * x * x - 3.0 * x * x + 5.0 * x + 7.0);
        assert_eq!(poly_d1(&c, x), 6.0 * x * x - 6.0 * x + 5.0);
        assert_eq!(poly_d2(&c, x), 12.0 * x - 6.0);
        assert_eq!(poly_d2(&[4.0, 1.0], x), 0.0);
    }
}
