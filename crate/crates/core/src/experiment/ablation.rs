use rayon::prelude::*;
use serde::{Deserialize, Serialize};

use super::dataset::Sample;
use super::metrics::mean;
use crate::error::{Error, Result};
use crate::ipm::{solve, IpmOptions, WarmStart};
use crate::pf::Network;

/// Which components of the ground truth seed the solver. Absent components
/// keep the solver's cold defaults.
#[derive(Debug, Clone, Copy, PartialEq, Eq, Hash, PartialOrd, Ord, Serialize, Deserialize)]
pub struct AblationMask {
    pub x: bool,
    pub lambda: bool,
    pub mu: bool,
    pub z: bool,
}

impl AblationMask {
    /// All 16 masks from `0000` to `1111`.
    pub fn all() -> Vec<AblationMask> {
        (0..16u8).map(Self::from_bits).collect()
    }

    /// Bit 3 is `X`, bit 0 is `Z`.
    pub fn from_bits(b: u8) -> Self {
        Self { x: b & 8 != 0, lambda: b & 4 != 0, mu: b & 2 != 0, z: b & 1 != 0 }
    }

    pub fn bits(self) -> u8 {
        (self.x as u8) << 3 | (self.lambda as u8) << 2 | (self.mu as u8) << 1 | self.z as u8
    }

    pub fn label(self) -> String {
        format!("{:04b}", self.bits())
    }

    pub fn parse(s: &str) -> Result<Self> {
        if s.len() != 4 || !s.chars().all(|c| c == '0' || c == '1') {
            return Err(Error::Unknown { kind: "mask", name: s.to_string() });
        }
        Ok(Self::from_bits(u8::from_str_radix(s, 2).expect("binary digits")))
    }

    pub fn warm_start(self, truth: &super::GroundTruth) -> WarmStart {
        WarmStart {
            x: self.x.then(|| truth.x.clone()),
            lambda: self.lambda.then(|| truth.lambda.clone()),
            mu: self.mu.then(|| truth.mu.clone()),
            z: self.z.then(|| truth.z.clone()),
        }
    }
}

#[derive(Debug, Clone, PartialEq, Serialize, Deserialize)]
pub struct AblationRow {
    pub mask: String,
    pub total: usize,
    pub converged: usize,
    pub sr: f64,
    /// Mean iterations over converged runs.
    pub mean_iterations: f64,
    /// Mean warm / cold iteration ratio over pairs where both converged.
    pub iteration_ratio: f64,
    /// Mean cold / warm iteration ratio over the same pairs.
    pub su_iterations: f64,
    /// Mean cold / warm wall-time ratio; absent when timings are suppressed.
    pub su_time: Option<f64>,
}

#[derive(Debug, Clone, PartialEq, Serialize, Deserialize)]
pub struct AblationTable {
    pub rows: Vec<AblationRow>,
}

impl AblationTable {
    pub fn row(&self, mask: &str) -> Option<&AblationRow> {
        self.rows.iter().find(|r| r.mask == mask)
    }

    pub fn to_csv(&self) -> String {
        let mut s = String::from("mask,total,converged,sr,mean_iterations,iteration_ratio,su_iterations,su_time\n");
        for r in &self.rows {
            let su_time = r.su_time.map(|v| format!("{v:.6}")).unwrap_or_default();
            s.push_str(&format!(
                "{},{},{},{:.6},{:.6},{:.6},{:.6},{}\n",
                r.mask, r.total, r.converged, r.sr, r.mean_iterations, r.iteration_ratio, r.su_iterations, su_time
            ));
        }
        s
    }
}

struct Run {
    converged: bool,
    iterations: usize,
    time: f64,
}

fn run_masks(net: &Network, sample: &Sample, masks: &[AblationMask], opts: &IpmOptions) -> Result<Vec<Run>> {
    let net = net.with_loads(&sample.scenario.pd, &sample.scenario.qd)?;
    masks
        .iter()
        .map(|m| {
            let ws = m.warm_start(&sample.truth);
            let (_, r) = solve(&net, Some(&ws), opts)?;
            Ok(Run { converged: r.converged, iterations: r.iterations, time: r.wall_time })
        })
        .collect()
}

/// Solves every sample under each of the 16 masks without fallback.
pub fn ablation_run(net: &Network, samples: &[Sample], opts: &IpmOptions, timed: bool) -> Result<AblationTable> {
    let masks = AblationMask::all();
    let runs: Vec<Vec<Run>> = samples
        .par_iter()
        .map(|s| run_masks(net, s, &masks, opts))
        .collect::<Result<_>>()?;
    let rows = masks
        .iter()
        .enumerate()
        .map(|(k, m)| {
            let col: Vec<(&Run, &Run)> = runs.iter().map(|r| (&r[0], &r[k])).collect();
            let converged = col.iter().filter(|(_, w)| w.converged).count();
            let pairs: Vec<&(&Run, &Run)> = col.iter().filter(|(c, w)| c.converged && w.converged).collect();
            let ratio = mean(pairs.iter().map(|(c, w)| w.iterations as f64 / c.iterations.max(1) as f64));
            let su_it = mean(pairs.iter().map(|(c, w)| c.iterations.max(1) as f64 / w.iterations.max(1) as f64));
            let su_time = timed.then(|| {
                if k == 0 { 1.0 } else { mean(pairs.iter().map(|(c, w)| c.time / w.time.max(1e-12))) }
            });
            AblationRow {
                mask: m.label(),
                total: samples.len(),
                converged,
                sr: if samples.is_empty() { 0.0 } else { converged as f64 / samples.len() as f64 },
                mean_iterations: mean(col.iter().filter(|(_, w)| w.converged).map(|(_, w)| w.iterations as f64)),
                iteration_ratio: if k == 0 { 1.0 } else { ratio },
                su_iterations: if k == 0 { 1.0 } else { su_it },
                su_time,
            }
        })
        .collect();
    Ok(AblationTable { rows })
}
