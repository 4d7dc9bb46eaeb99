//! Derivatives of a single admittance term of the complex power product.
//!
//! For an admittance entry `Y = G + jB` linking bus `i` to bus `k`, the term
//! `V_i · conj(Y · V_k)` has
//!
//! ```text
//! P = a·b·(G cos θ + B sin θ)
//! Q = a·b·(G sin θ − B cos θ)
//! ```
//!
//! with `a = |V_i|`, `b = |V_k|`, `θ = θ_i − θ_k`. Derivatives are taken with
//! respect to the four slots `(θ_i, θ_k, a, b)`; when two slots refer to the
//! same variable the caller sums them.

use num_complex::Complex64;

pub(crate) const TH_I: usize = 0;
pub(crate) const TH_K: usize = 1;
pub(crate) const VM_I: usize = 2;
pub(crate) const VM_K: usize = 3;

#[derive(Debug, Clone, Copy)]
pub(crate) struct Term {
    pub p: f64,
    pub q: f64,
    pub dp: [f64; 4],
    pub dq: [f64; 4],
}

#[derive(Debug, Clone, Copy)]
pub(crate) struct TermHess {
    pub d2p: [[f64; 4]; 4],
    pub d2q: [[f64; 4]; 4],
}

#[inline]
fn parts(y: Complex64, th_i: f64, th_k: f64) -> (f64, f64) {
    let (s, c) = (th_i - th_k).sin_cos();
    let u = y.re * c + y.im * s;
    let w = y.re * s - y.im * c;
    (u, w)
}

pub(crate) fn term(y: Complex64, th_i: f64, th_k: f64, a: f64, b: f64) -> Term {
    let (u, w) = parts(y, th_i, th_k);
    let ab = a * b;
    Term {
        p: ab * u,
        q: ab * w,
        dp: [-ab * w, ab * w, b * u, a * u],
        dq: [ab * u, -ab * u, b * w, a * w],
    }
}

pub(crate) fn term_hess(y: Complex64, th_i: f64, th_k: f64, a: f64, b: f64) -> TermHess {
    let (u, w) = parts(y, th_i, th_k);
    let ab = a * b;
    let d2p = [
        [-ab * u, ab * u, -b * w, -a * w],
        [ab * u, -ab * u, b * w, a * w],
        [-b * w, b * w, 0.0, u],
        [-a * w, a * w, u, 0.0],
    ];
    let d2q = [
        [-ab * w, ab * w, b * u, a * u],
        [ab * w, -ab * w, -b * u, -a * u],
        [b * u, -b * u, 0.0, w],
        [a * u, -a * u, w, 0.0],
    ];
    TermHess { d2p, d2q }
}
