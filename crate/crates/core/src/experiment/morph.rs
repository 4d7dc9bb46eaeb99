use log::{info, warn};
use rayon::prelude::*;
use serde::{Deserialize, Serialize};

use super::ablation::AblationMask;
use super::dataset::Sample;
use super::metrics::{mean, metric_su, relative_errors};
use crate::error::{Error, Result};
use crate::ipm::{solve, IpmOptions, WarmStart};
use crate::mtl::{deepen, train, widen, MtlModel, Prediction, Task, TrainConfig, EPSILON};
use crate::pf::Network;

#[derive(Debug, Clone, Copy, PartialEq, Eq, Serialize, Deserialize)]
#[serde(rename_all = "lowercase")]
pub enum MorphOp {
    Deep,
    Wide,
}

#[derive(Debug, Clone)]
pub struct MorphConfig {
    /// Required validation MAPE of `X`, in percent.
    pub target_mape: f64,
    pub max_iterations: usize,
    /// Validation scenarios solved per prior case.
    pub probe: usize,
    pub widen_fraction: f64,
    pub train: TrainConfig,
    pub ipm: IpmOptions,
}

impl Default for MorphConfig {
    fn default() -> Self {
        Self {
            target_mape: 1.0,
            max_iterations: 3,
            probe: 16,
            widen_fraction: 0.1,
            train: TrainConfig::default(),
            ipm: IpmOptions::default(),
        }
    }
}

#[derive(Debug, Clone, PartialEq, Serialize, Deserialize)]
pub struct PriorCase {
    pub mask: String,
    pub su_iterations: f64,
    pub sr: f64,
}

#[derive(Debug, Clone, PartialEq, Serialize, Deserialize)]
pub struct MorphStep {
    pub iteration: usize,
    /// Per-task validation MAPE before the step, in `Task::ALL` order.
    pub mape_before: [f64; 7],
    pub priors: Vec<PriorCase>,
    pub best_prior: String,
    pub op: MorphOp,
    pub trunk: Vec<usize>,
    pub mape_after: [f64; 7],
}

#[derive(Debug, Clone, PartialEq, Serialize, Deserialize)]
pub struct MorphOutcome {
    pub steps: Vec<MorphStep>,
    pub final_mape: f64,
    pub met: bool,
}

/// Per-task MAPE over `samples` with `|gt| + ε` denominators.
pub fn task_mape(model: &MtlModel, samples: &[Sample]) -> Result<[f64; 7]> {
    let loads: Vec<(&[f64], &[f64])> = samples.iter().map(|s| (&s.scenario.pd[..], &s.scenario.qd[..])).collect();
    let preds = model.predict_batch(&loads)?;
    let mut out = [0.0; 7];
    for t in Task::ALL {
        let per: Vec<f64> = preds
            .iter()
            .zip(samples)
            .map(|(p, s)| {
                let gt = truth_of(s, t, p);
                100.0 * mean(relative_errors(p.get(t), &gt, EPSILON))
            })
            .collect();
        out[t.index()] = mean(per.into_iter());
    }
    Ok(out)
}

fn truth_of(s: &Sample, t: Task, p: &Prediction) -> Vec<f64> {
    let x = &s.truth.x;
    let off: usize = Task::X.iter().take_while(|&&u| u != t).map(|&u| p.get(u).len()).sum();
    match t {
        Task::Lambda => s.truth.lambda.clone(),
        Task::Mu => s.truth.mu.clone(),
        Task::Z => s.truth.z.clone(),
        _ => x[off..off + p.get(t).len()].to_vec(),
    }
}

/// Mean `X` MAPE, the quantity compared with the requirement.
pub fn x_mape(m: &[f64; 7]) -> f64 {
    mean(Task::X.iter().map(|t| m[t.index()]))
}

/// Prediction with the masked components replaced by ground truth.
fn substitute(pred: &WarmStart, s: &Sample, mask: AblationMask) -> WarmStart {
    let truth = mask.warm_start(&s.truth);
    WarmStart {
        x: truth.x.or_else(|| pred.x.clone()),
        lambda: truth.lambda.or_else(|| pred.lambda.clone()),
        mu: truth.mu.or_else(|| pred.mu.clone()),
        z: truth.z.or_else(|| pred.z.clone()),
    }
}

/// Iteration speedup of every prior case over the probe batch.
pub fn prior_analysis(model: &MtlModel, net: &Network, probe: &[Sample], opts: &IpmOptions) -> Result<Vec<PriorCase>> {
    let masks = AblationMask::all();
    let runs: Vec<(usize, Vec<(bool, usize)>)> = probe
        .par_iter()
        .map(|s| {
            let net = net.with_loads(&s.scenario.pd, &s.scenario.qd)?;
            let pred = model.predict_warm_start(&s.scenario.pd, &s.scenario.qd)?;
            let cold = s.truth.iterations;
            let warm = masks
                .iter()
                .map(|&m| {
                    let (_, r) = solve(&net, Some(&substitute(&pred, s, m)), opts)?;
                    Ok((r.converged, r.iterations))
                })
                .collect::<Result<Vec<_>>>()?;
            Ok((cold, warm))
        })
        .collect::<Result<_>>()?;
    let n = probe.len().max(1) as f64;
    let cold = mean(runs.iter().map(|(c, _)| *c as f64));
    Ok(masks
        .iter()
        .enumerate()
        .map(|(k, m)| {
            let ok: Vec<usize> = runs.iter().filter(|(_, w)| w[k].0).map(|(_, w)| w[k].1).collect();
            let sr = ok.len() as f64 / n;
            let warm = mean(ok.iter().map(|&i| i as f64));
            PriorCase { mask: m.label(), su_iterations: metric_su(cold, 0.0, warm, sr), sr }
        })
        .collect())
}

/// Grows and retrains the model until the mean validation `X` MAPE meets
/// `cfg.target_mape` or `cfg.max_iterations` steps have run. The best
/// partial prior case (all-truth `1111` always wins and is skipped) picks the
/// operation: one that needs exact `X` calls for more width, otherwise the
/// trunk is deepened.
pub fn quality_prior_morphism(
    model: &mut MtlModel,
    net: &Network,
    train_set: &[Sample],
    val: &[Sample],
    cfg: &MorphConfig,
) -> Result<MorphOutcome> {
    if !(cfg.target_mape >= 0.0) || cfg.probe == 0 || !(cfg.widen_fraction > 0.0) {
        return Err(Error::Invalid("morphism needs target_mape >= 0, probe > 0, widen_fraction > 0".into()));
    }
    if val.is_empty() {
        return Err(Error::Invalid("morphism needs validation samples".into()));
    }
    let probe = &val[..cfg.probe.min(val.len())];
    let mut mape = task_mape(model, val)?;
    let mut steps = Vec::new();
    while x_mape(&mape) > cfg.target_mape && steps.len() < cfg.max_iterations {
        let iteration = steps.len() + 1;
        let priors = prior_analysis(model, net, probe, &cfg.ipm)?;
        let best = priors
            .iter()
            .filter(|p| p.mask != "1111")
            .max_by(|a, b| a.su_iterations.total_cmp(&b.su_iterations))
            .expect("fifteen partial prior cases");
        let op = if AblationMask::parse(&best.mask)?.x { MorphOp::Wide } else { MorphOp::Deep };
        match op {
            MorphOp::Wide => {
                widen(model, cfg.widen_fraction, cfg.train.seed.wrapping_add(iteration as u64))?;
            }
            MorphOp::Deep => deepen(model)?,
        }
        let tc = TrainConfig { seed: cfg.train.seed.wrapping_add(iteration as u64), ..cfg.train.clone() };
        train(model, net, train_set, val, &tc)?;
        let after = task_mape(model, val)?;
        info!(
            "morph step {iteration}: prior {} -> {:?}, X MAPE {:.4}% -> {:.4}%",
            best.mask,
            op,
            x_mape(&mape),
            x_mape(&after)
        );
        steps.push(MorphStep {
            iteration,
            mape_before: mape,
            best_prior: best.mask.clone(),
            priors,
            op,
            trunk: model.topology.shared_dims.clone(),
            mape_after: after,
        });
        mape = after;
    }
    let met = x_mape(&mape) <= cfg.target_mape;
    if !met {
        warn!("morphism stopped after {} steps with X MAPE {:.4}% above {:.4}%", steps.len(), x_mape(&mape), cfg.target_mape);
    }
    Ok(MorphOutcome { steps, final_mape: x_mape(&mape), met })
}
