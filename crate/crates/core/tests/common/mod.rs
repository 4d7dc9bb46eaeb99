#![allow(dead_code)]

use std::path::PathBuf;

use rand::{Rng, SeedableRng};
use rand_chacha::ChaCha8Rng;
use smartpg::case::{parse_case_json, GridCase};
use smartpg::pf::Network;

pub const CASES: [&str; 5] = ["case9", "case14", "case30", "case57", "case118"];

pub fn repo_root() -> PathBuf {
    PathBuf::from(env!("CARGO_MANIFEST_DIR")).join("../..")
}

pub fn case_text(name: &str, ext: &str) -> String {
    std::fs::read_to_string(repo_root().join("cases").join(format!("{name}.{ext}"))).unwrap()
}

pub fn load_case(name: &str) -> GridCase {
    parse_case_json(&case_text(name, "json")).unwrap()
}

pub fn network(name: &str) -> Network {
    Network::new(&load_case(name)).unwrap()
}

pub fn fixture(name: &str) -> serde_json::Value {
    let path = PathBuf::from(env!("CARGO_MANIFEST_DIR")).join("tests/fixtures").join(name);
    serde_json::from_str(&std::fs::read_to_string(path).unwrap()).unwrap()
}

pub fn oracle_objective(case: &str) -> f64 {
    fixture("oracle_opf.json")[case]["objective"].as_f64().unwrap()
}

pub fn rng(seed: u64) -> ChaCha8Rng {
    ChaCha8Rng::seed_from_u64(seed)
}

/// Random point strictly inside the variable bounds; free angles in ±0.3 rad.
pub fn interior_point(net: &Network, rng: &mut ChaCha8Rng) -> Vec<f64> {
    (0..net.dims.n_x)
        .map(|i| {
            let (lo, hi) = (net.bounds.x_min[i], net.bounds.x_max[i]);
            if lo == hi {
                lo
            } else if lo.is_finite() && hi.is_finite() {
                lo + (hi - lo) * rng.gen_range(0.05..0.95)
            } else {
                rng.gen_range(-0.3..0.3)
            }
        })
        .collect()
}

/// Max over entries of |a − b| / (1 + |b|).
pub fn rel_err(a: &[f64], b: &[f64]) -> f64 {
    assert_eq!(a.len(), b.len());
    a.iter().zip(b).map(|(x, y)| (x - y).abs() / (1.0 + y.abs())).fold(0.0, f64::max)
}

pub fn vec_f64(v: &serde_json::Value) -> Vec<f64> {
    v.as_array().unwrap().iter().map(|x| x.as_f64().unwrap()).collect()
}
