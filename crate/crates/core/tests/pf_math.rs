mod common;

use common::*;
use smartpg::pf::*;

fn fd_jacobian(f: impl Fn(&[f64]) -> Vec<f64>, x: &[f64], step: f64) -> Vec<Vec<f64>> {
    // Columns of the Jacobian by central differences.
    (0..x.len())
        .map(|j| {
            let h = step * (1.0 + x[j].abs());
            let mut xp = x.to_vec();
            let mut xm = x.to_vec();
            xp[j] += h;
            xm[j] -= h;
            let (fp, fm) = (f(&xp), f(&xm));
            fp.iter().zip(&fm).map(|(a, b)| (a - b) / (2.0 * h)).collect()
        })
        .collect()
}

fn column(dense: &[Vec<f64>], j: usize) -> Vec<f64> {
    dense.iter().map(|row| row[j]).collect()
}

#[test]
fn case9_power_flow_solution_balances() {
    let net = network("case9");
    let fx = fixture("case9_pf.json");
    let va: Vec<f64> = vec_f64(&fx["va_deg"]).iter().map(|d| d.to_radians()).collect();
    let vm = vec_f64(&fx["vm"]);
    let s = bus_injections(&net.ybus, &va, &vm);
    let re = vec_f64(&fx["sbus_re"]);
    let im = vec_f64(&fx["sbus_im"]);
    for i in 0..9 {
        assert!((s[i].re - re[i]).abs() < 1e-8, "bus {i}");
        assert!((s[i].im - im[i]).abs() < 1e-8, "bus {i}");
    }
}

fn oracle_point(net: &Network, name: &str) -> Vec<f64> {
    let o = &fixture("oracle_opf.json")[name];
    let va: Vec<f64> = vec_f64(&o["va_deg"]).iter().map(|d| d.to_radians()).collect();
    let base = net.base_mva;
    let pg: Vec<f64> = vec_f64(&o["pg_mw"]).iter().map(|p| p / base).collect();
    let qg: Vec<f64> = vec_f64(&o["qg_mvar"]).iter().map(|q| q / base).collect();
    [va, vec_f64(&o["vm"]), pg, qg].concat()
}

#[test]
fn oracle_solutions_are_feasible_and_optimal() {
    for name in CASES {
        let net = network(name);
        let x = oracle_point(&net, name);
        let g = residual_g(&net, &x);
        let gmax = g.iter().fold(0.0f64, |m, v| m.max(v.abs()));
        assert!(gmax < 1e-6, "{name}: {gmax}");
        let h = inequality_h(&net, &x);
        assert!(h.iter().all(|&v| v < 1e-6), "{name}");
        let f = cost_f(&net, &x);
        let f0 = oracle_objective(name);
        assert!(((f - f0) / f0).abs() < 1e-6, "{name}: {f} vs {f0}");
    }
}

#[test]
fn case9_flat_start_residual_is_load_mismatch() {
    let net = network("case9");
    let n = 9;
    let mut x = vec![0.0; net.dims.n_x];
    x[n..2 * n].iter_mut().for_each(|v| *v = 1.0);
    // Dispatch at generator bound midpoints.
    for j in 0..3 {
        x[2 * n + j] = 0.5 * (net.bounds.x_min[2 * n + j] + net.bounds.x_max[2 * n + j]);
    }
    let g = residual_g(&net, &x);
    // Flat voltages on a network without bus shunts leave only line charging.
    let s = bus_injections(&net.ybus, &vec![0.0; n], &vec![1.0; n]);
    for i in 0..n {
        let gen: f64 = net.gen_bus.iter().enumerate().filter(|(_, &b)| b == i).map(|(j, _)| x[2 * n + j]).sum();
        let expect = s[i].re + net.pd[i] - gen;
        assert!((g[i] - expect).abs() < 1e-14);
        assert!(s[i].re.abs() < 1e-12);
    }
    assert!((g[4] - 0.9).abs() < 1e-12);
    assert!((g[0] - (-1.3)).abs() < 1e-12);
}

#[test]
fn derivatives_match_finite_differences() {
    for name in CASES {
        let net = network(name);
        let mut rng = rng(7);
        let points = 20;
        for p in 0..points {
            let x = interior_point(&net, &mut rng);
            let (jg, jh) = jacobians(&net, &x);
            let jg_d = jg.to_dense();
            let jh_d = jh.to_dense();
            let fd_g = fd_jacobian(|x| residual_g(&net, x), &x, 1e-6);
            let fd_h = fd_jacobian(|x| inequality_h(&net, x), &x, 1e-6);
            let fd_f = fd_jacobian(|x| vec![cost_f(&net, x)], &x, 1e-6);
            let gf = grad_f(&net, &x);
            for j in 0..net.dims.n_x {
                let e = rel_err(&column(&jg_d, j), &fd_g[j]);
                assert!(e < 1e-5, "{name} point {p} Jg col {j}: {e}");
                if !jh_d.is_empty() {
                    let e = rel_err(&column(&jh_d, j), &fd_h[j]);
                    assert!(e < 1e-5, "{name} point {p} Jh col {j}: {e}");
                }
                let scale = 1.0 + fd_f[j][0].abs();
                assert!((gf[j] - fd_f[j][0]).abs() / scale < 1e-5, "{name} grad_f {j}");
            }

            // Hessian of the Lagrangian against differences of its gradient.
            let lam: Vec<f64> = (0..net.dims.n_eq).map(|i| ((i * 37 + p) % 11) as f64 / 5.0 - 1.0).collect();
            let mu: Vec<f64> = (0..net.n_flow()).map(|i| ((i * 13 + p) % 7) as f64 / 7.0).collect();
            let lag_grad = |x: &[f64]| {
                let (jg, jh) = jacobians(&net, x);
                let mut g = grad_f(&net, x);
                for (v, w) in g.iter_mut().zip(jg.tr_mul_vec(&lam)) {
                    *v += w;
                }
                if jh.n_rows > 0 {
                    for (v, w) in g.iter_mut().zip(jh.tr_mul_vec(&mu)) {
                        *v += w;
                    }
                }
                g
            };
            let hs = hess_lagrangian(&net, &x, &lam, &mu).to_dense();
            let fd = fd_jacobian(lag_grad, &x, 1e-6);
            for j in 0..net.dims.n_x {
                let e = rel_err(&column(&hs, j), &fd[j]);
                assert!(e < 1e-5, "{name} point {p} Hessian col {j}: {e}");
                for i in 0..net.dims.n_x {
                    let d = (hs[i][j] - hs[j][i]).abs();
                    assert!(d <= 1e-12 * (1.0 + hs[i][j].abs()), "{name} symmetry ({i},{j})");
                }
            }
        }
    }
}

#[test]
fn cost_invariant_under_generator_permutation() {
    let mut case = load_case("case30");
    let net = Network::new(&case).unwrap();
    let mut rng = rng(3);
    let x = interior_point(&net, &mut rng);
    let f = cost_f(&net, &x);
    case.gens.reverse();
    let rev = Network::new(&case).unwrap();
    let n = net.n_bus();
    let ng = net.n_gen();
    let mut xr = x.clone();
    for j in 0..ng {
        xr[2 * n + j] = x[2 * n + ng - 1 - j];
        xr[2 * n + ng + j] = x[2 * n + 2 * ng - 1 - j];
    }
    assert!((cost_f(&rev, &xr) - f).abs() < 1e-9 * f.abs());
}

#[test]
fn flows_invariant_under_branch_reversal() {
    // Reversing a line without taps swaps its from/to rows.
    let mut case = load_case("case9");
    let net = Network::new(&case).unwrap();
    let x = interior_point(&net, &mut rng(11));
    let h = inequality_h(&net, &x);
    let nr = net.rated.len();
    let k = 1;
    let br = &mut case.branches[k];
    std::mem::swap(&mut br.from, &mut br.to);
    let rev = Network::new(&case).unwrap();
    let hr = inequality_h(&rev, &x);
    assert!((h[k] - hr[nr + k]).abs() < 1e-12);
    assert!((h[nr + k] - hr[k]).abs() < 1e-12);
}
