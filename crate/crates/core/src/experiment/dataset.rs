use std::collections::HashSet;
use std::io::{BufRead, Write};

use rand::{Rng, SeedableRng};
use rand_chacha::ChaCha8Rng;
use rayon::prelude::*;
use serde::{Deserialize, Serialize};

use crate::error::{Error, Result};
use crate::ipm::{solve, IpmOptions, OpfPoint, WarmStart};
use crate::pf::Network;

/// One load profile, MW and MVAr per bus.
#[derive(Debug, Clone, PartialEq, Serialize, Deserialize)]
pub struct Scenario {
    pub id: u64,
    pub pd: Vec<f64>,
    pub qd: Vec<f64>,
}

/// Converged solver output for a scenario.
#[derive(Debug, Clone, PartialEq, Serialize, Deserialize)]
pub struct GroundTruth {
    pub x: Vec<f64>,
    pub lambda: Vec<f64>,
    pub mu: Vec<f64>,
    pub z: Vec<f64>,
    /// $/hr.
    pub f0: f64,
    /// Seconds; zero when timings are suppressed.
    pub solve_time: f64,
    pub iterations: usize,
}

impl GroundTruth {
    pub fn from_point(p: &OpfPoint, solve_time: f64, iterations: usize) -> Self {
        Self {
            x: p.x.flatten(),
            lambda: p.lambda.clone(),
            mu: p.mu.clone(),
            z: p.z.clone(),
            f0: p.objective,
            solve_time,
            iterations,
        }
    }

    pub fn warm_start(&self) -> WarmStart {
        WarmStart {
            x: Some(self.x.clone()),
            lambda: Some(self.lambda.clone()),
            mu: Some(self.mu.clone()),
            z: Some(self.z.clone()),
        }
    }
}

#[derive(Debug, Clone, PartialEq, Serialize, Deserialize)]
pub struct Sample {
    pub scenario: Scenario,
    pub truth: GroundTruth,
}

#[derive(Debug, Clone, PartialEq, Serialize, Deserialize)]
pub struct Reject {
    pub id: u64,
    pub iterations: usize,
    pub reason: String,
}

/// SplitMix64 finalizer, used for scenario ids and the split hash.
pub fn splitmix64(mut z: u64) -> u64 {
    z = z.wrapping_add(0x9E37_79B9_7F4A_7C15);
    z = (z ^ (z >> 30)).wrapping_mul(0xBF58_476D_1CE4_E5B9);
    z = (z ^ (z >> 27)).wrapping_mul(0x94D0_49BB_1331_11EB);
    z ^ (z >> 31)
}

/// Draws `n` load profiles, every entry uniform within `±t` of its default.
pub fn sample_loads(net: &Network, n: usize, t: f64, seed: u64) -> Result<Vec<Scenario>> {
    if !(0.0..1.0).contains(&t) {
        return Err(Error::Invalid(format!("variation {t} outside [0, 1)")));
    }
    let pd0: Vec<f64> = net.case.buses.iter().map(|b| b.pd).collect();
    let qd0: Vec<f64> = net.case.buses.iter().map(|b| b.qd).collect();
    let mut rng = ChaCha8Rng::seed_from_u64(seed);
    Ok((0..n)
        .map(|i| {
            let mut draw = |d: &f64| d * (1.0 + t * rng.gen_range(-1.0..=1.0));
            let pd = pd0.iter().map(&mut draw).collect();
            let qd = qd0.iter().map(&mut draw).collect();
            Scenario { id: splitmix64(seed ^ splitmix64(i as u64)), pd, qd }
        })
        .collect())
}

pub(crate) fn check_unique(scenarios: &[Scenario]) -> Result<()> {
    let mut seen = HashSet::new();
    for s in scenarios {
        if !seen.insert(s.id) {
            return Err(Error::Invalid(format!("duplicate scenario id {}", s.id)));
        }
    }
    Ok(())
}

/// Cold-solves every scenario. Converged ones become samples, in input order.
pub fn generate_dataset(
    net: &Network,
    scenarios: &[Scenario],
    opts: &IpmOptions,
    record_time: bool,
) -> Result<(Vec<Sample>, Vec<Reject>)> {
    check_unique(scenarios)?;
    let results: Vec<Result<std::result::Result<Sample, Reject>>> = scenarios
        .par_iter()
        .map(|s| {
            let net = net.with_loads(&s.pd, &s.qd)?;
            let (point, report) = solve(&net, None, opts)?;
            if report.converged {
                let t = if record_time { report.wall_time } else { 0.0 };
                Ok(Ok(Sample {
                    scenario: s.clone(),
                    truth: GroundTruth::from_point(&point, t, report.iterations),
                }))
            } else {
                Ok(Err(Reject {
                    id: s.id,
                    iterations: report.iterations,
                    reason: report.failure.unwrap_or_default(),
                }))
            }
        })
        .collect();
    let mut samples = Vec::new();
    let mut rejects = Vec::new();
    for r in results {
        match r? {
            Ok(s) => samples.push(s),
            Err(r) => rejects.push(r),
        }
    }
    Ok((samples, rejects))
}

/// Deterministic 80/20 train/validation split by hashed scenario id.
pub fn split(samples: &[Sample]) -> (Vec<Sample>, Vec<Sample>) {
    let mut order: Vec<&Sample> = samples.iter().collect();
    order.sort_by_key(|s| (splitmix64(s.scenario.id), s.scenario.id));
    let n_train = (0.8 * samples.len() as f64).round() as usize;
    let train = order[..n_train].iter().map(|s| (*s).clone()).collect();
    let val = order[n_train..].iter().map(|s| (*s).clone()).collect();
    (train, val)
}

pub fn write_jsonl<W: Write>(mut w: W, samples: &[Sample]) -> Result<()> {
    for s in samples {
        serde_json::to_writer(&mut w, s)?;
        w.write_all(b"\n")?;
    }
    Ok(())
}

pub fn read_jsonl<R: BufRead>(r: R) -> Result<Vec<Sample>> {
    let mut out = Vec::new();
    for (i, line) in r.lines().enumerate() {
        let line = line?;
        if line.trim().is_empty() {
            continue;
        }
        let s: Sample = serde_json::from_str(&line)
            .map_err(|e| Error::Schema(format!("dataset line {}: {e}", i + 1)))?;
        out.push(s);
    }
    let scenarios: Vec<Scenario> = out.iter().map(|s| s.scenario.clone()).collect();
    check_unique(&scenarios)?;
    Ok(out)
}

/// Checks that every sample matches the network's dimensions.
pub fn validate_samples(net: &Network, samples: &[Sample]) -> Result<()> {
    let d = &net.dims;
    for s in samples {
        let t = &s.truth;
        let ok = s.scenario.pd.len() == d.n_bus
            && s.scenario.qd.len() == d.n_bus
            && t.x.len() == d.n_x
            && t.lambda.len() == d.n_eq
            && t.mu.len() == d.n_ineq
            && t.z.len() == d.n_ineq;
        if !ok {
            return Err(Error::Dimension(format!("sample {} does not match the case", s.scenario.id)));
        }
    }
    Ok(())
}
