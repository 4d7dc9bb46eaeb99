use std::time::Instant;

use rayon::prelude::*;
use serde::{Deserialize, Serialize};

use super::dataset::Sample;
use super::metrics::{l_cost, mean, median, metric_mape, metric_su, relative_errors, speedup_factor};
use crate::error::Result;
use crate::ipm::{solve, solve_with_fallback, IpmOptions, WarmStart};
use crate::mtl::{Task, EPSILON};
use crate::pf::{cost_f, Network};
use crate::strategy::WarmStartStrategy;

pub const SF_DEFINITION: &str =
    "sf = mean over scenarios of (full solve time / inference time); larger is faster inference";

/// Per-scenario measurements behind a [`MetricsReport`].
#[derive(Debug, Clone, PartialEq, Serialize, Deserialize)]
pub struct ScenarioResult {
    pub id: u64,
    pub cold_iterations: usize,
    pub cold_converged: bool,
    /// Iterations of the first (warm) attempt.
    pub warm_iterations: usize,
    pub warm_converged: bool,
    pub fallback_used: bool,
    pub final_converged: bool,
    pub total_iterations: usize,
    pub predicted_cost: Option<f64>,
    pub true_cost: f64,
    pub infer_time: f64,
    pub cold_time: f64,
    pub warm_time: f64,
    pub total_time: f64,
}

#[derive(Debug, Clone, PartialEq, Serialize, Deserialize)]
pub struct FeatureError {
    pub feature: Task,
    /// Mean over scenarios of the signed-denominator MAPE.
    pub mape: f64,
    /// Median over all elements of `|x − gt| / (|gt| + ε)`.
    pub median_relative_error: f64,
}

#[derive(Debug, Clone, PartialEq, Serialize, Deserialize)]
pub struct Timings {
    pub t_mips: f64,
    pub t_mtl: f64,
    pub t_mips_warm: f64,
}

#[derive(Debug, Clone, PartialEq, Serialize, Deserialize)]
pub struct MetricsReport {
    pub strategy: String,
    pub scenarios: usize,
    /// Success rate of the warm attempt, before any fallback.
    pub sr: f64,
    pub sr_final: f64,
    pub fallback_count: usize,
    pub mean_cold_iterations: f64,
    pub mean_warm_iterations: f64,
    /// Mean warm / cold iteration ratio over scenarios where both converged.
    pub iteration_ratio: f64,
    /// Speedup formula with iteration counts in place of times and no
    /// inference cost.
    pub su_iterations: f64,
    pub su: Option<f64>,
    pub sf: Option<f64>,
    pub sf_definition: String,
    pub l_cost: Option<f64>,
    pub features: Vec<FeatureError>,
    pub timings: Option<Timings>,
}

impl MetricsReport {
    pub fn feature(&self, t: Task) -> Option<&FeatureError> {
        self.features.iter().find(|f| f.feature == t)
    }
}

pub fn results_csv(rows: &[ScenarioResult]) -> String {
    let mut s = String::from(
        "id,cold_iterations,cold_converged,warm_iterations,warm_converged,fallback_used,final_converged,total_iterations,predicted_cost,true_cost,infer_time,cold_time,warm_time,total_time\n",
    );
    for r in rows {
        s.push_str(&format!(
            "{},{},{},{},{},{},{},{},{},{},{:e},{:e},{:e},{:e}\n",
            r.id,
            r.cold_iterations,
            r.cold_converged,
            r.warm_iterations,
            r.warm_converged,
            r.fallback_used,
            r.final_converged,
            r.total_iterations,
            r.predicted_cost.map(|c| c.to_string()).unwrap_or_default(),
            r.true_cost,
            r.infer_time,
            r.cold_time,
            r.warm_time,
            r.total_time
        ));
    }
    s
}

/// Splits a warm start into per-task vectors; missing parts are `None`.
fn task_parts(net: &Network, ws: &WarmStart) -> [Option<Vec<f64>>; 7] {
    let (n, g) = (net.n_bus(), net.n_gen());
    let xs = |a: usize, b: usize| ws.x.as_ref().map(|x| x[a..b].to_vec());
    [
        xs(0, n),
        xs(n, 2 * n),
        xs(2 * n, 2 * n + g),
        xs(2 * n + g, 2 * n + 2 * g),
        ws.lambda.clone(),
        ws.mu.clone(),
        ws.z.clone(),
    ]
}

fn truth_parts(net: &Network, s: &Sample) -> [Vec<f64>; 7] {
    let t = &s.truth;
    let (n, g) = (net.n_bus(), net.n_gen());
    [
        t.x[..n].to_vec(),
        t.x[n..2 * n].to_vec(),
        t.x[2 * n..2 * n + g].to_vec(),
        t.x[2 * n + g..].to_vec(),
        t.lambda.clone(),
        t.mu.clone(),
        t.z.clone(),
    ]
}

struct Measured {
    result: ScenarioResult,
    parts: [Option<Vec<f64>>; 7],
}

fn measure(net: &Network, s: &Sample, strategy: &dyn WarmStartStrategy, opts: &IpmOptions) -> Result<Measured> {
    let net = net.with_loads(&s.scenario.pd, &s.scenario.qd)?;
    let (_, cold) = solve(&net, None, opts)?;
    let t0 = Instant::now();
    let ws = strategy.warm_start(&s.scenario, Some(&s.truth))?;
    let infer_time = t0.elapsed().as_secs_f64();
    let (_, warm) = solve_with_fallback(&net, ws.as_ref(), opts)?;
    let first = warm.attempts[0];
    let predicted_cost = ws.as_ref().and_then(|w| w.x.as_ref()).map(|x| cost_f(&net, x));
    let parts = ws.as_ref().map(|w| task_parts(&net, w)).unwrap_or_default();
    Ok(Measured {
        result: ScenarioResult {
            id: s.scenario.id,
            cold_iterations: cold.iterations,
            cold_converged: cold.converged,
            warm_iterations: first.iterations,
            warm_converged: first.converged,
            fallback_used: warm.fallback_used,
            final_converged: warm.converged,
            total_iterations: warm.total_iterations(),
            predicted_cost,
            true_cost: s.truth.f0,
            infer_time,
            cold_time: cold.wall_time,
            warm_time: first.wall_time,
            total_time: warm.wall_time,
        },
        parts,
    })
}

/// Runs the strategy over `samples` with fallback and aggregates the
/// speed and accuracy metrics. With `timed` false every wall-clock field is
/// zeroed and time-based metrics are omitted.
pub fn bench(
    net: &Network,
    samples: &[Sample],
    strategy: &dyn WarmStartStrategy,
    opts: &IpmOptions,
    timed: bool,
) -> Result<(MetricsReport, Vec<ScenarioResult>)> {
    let measured: Vec<Measured> = samples
        .par_iter()
        .map(|s| measure(net, s, strategy, opts))
        .collect::<Result<_>>()?;
    let n = samples.len().max(1) as f64;
    let rows: Vec<&ScenarioResult> = measured.iter().map(|m| &m.result).collect();
    let sr = rows.iter().filter(|r| r.warm_converged).count() as f64 / n;
    let sr_final = rows.iter().filter(|r| r.final_converged).count() as f64 / n;
    let pairs: Vec<&&ScenarioResult> = rows.iter().filter(|r| r.cold_converged && r.warm_converged).collect();
    let mean_cold = mean(rows.iter().map(|r| r.cold_iterations as f64));
    let mean_warm = mean(pairs.iter().map(|r| r.warm_iterations as f64));
    let iteration_ratio = mean(pairs.iter().map(|r| r.warm_iterations as f64 / r.cold_iterations.max(1) as f64));
    let su_iterations = metric_su(mean_cold, 0.0, mean_warm, sr);

    let timings = timed.then(|| Timings {
        t_mips: mean(rows.iter().map(|r| r.cold_time)),
        t_mtl: mean(rows.iter().map(|r| r.infer_time)),
        t_mips_warm: mean(pairs.iter().map(|r| r.warm_time)),
    });
    let su = timings.as_ref().map(|t| metric_su(t.t_mips, t.t_mtl, t.t_mips_warm, sr));
    let sf = timed.then(|| {
        let solve: Vec<f64> = rows.iter().map(|r| r.cold_time).collect();
        let infer: Vec<f64> = rows.iter().map(|r| r.infer_time.max(1e-12)).collect();
        speedup_factor(&solve, &infer)
    });
    let costs: Vec<(f64, f64)> = rows.iter().filter_map(|r| r.predicted_cost.map(|p| (p, r.true_cost))).collect();
    let l = (!costs.is_empty()).then(|| {
        let (p, t): (Vec<f64>, Vec<f64>) = costs.into_iter().unzip();
        l_cost(&p, &t)
    });

    let mut features = Vec::new();
    for task in Task::ALL {
        let k = task.index();
        let mut mapes = Vec::new();
        let mut rel = Vec::new();
        for (m, s) in measured.iter().zip(samples) {
            if let Some(pred) = &m.parts[k] {
                let gt = &truth_parts(net, s)[k];
                mapes.push(metric_mape(pred, gt, EPSILON));
                rel.extend(relative_errors(pred, gt, EPSILON));
            }
        }
        if !mapes.is_empty() {
            features.push(FeatureError {
                feature: task,
                mape: mean(mapes.into_iter()),
                median_relative_error: median(&mut rel),
            });
        }
    }

    let mut results: Vec<ScenarioResult> = measured.into_iter().map(|m| m.result).collect();
    if !timed {
        for r in &mut results {
            r.infer_time = 0.0;
            r.cold_time = 0.0;
            r.warm_time = 0.0;
            r.total_time = 0.0;
        }
    }
    let report = MetricsReport {
        strategy: strategy.name().to_string(),
        scenarios: samples.len(),
        sr,
        sr_final,
        fallback_count: results.iter().filter(|r| r.fallback_used).count(),
        mean_cold_iterations: mean_cold,
        mean_warm_iterations: mean_warm,
        iteration_ratio,
        su_iterations,
        su,
        sf,
        sf_definition: SF_DEFINITION.to_string(),
        l_cost: l,
        features,
        timings,
    };
    Ok((report, results))
}
