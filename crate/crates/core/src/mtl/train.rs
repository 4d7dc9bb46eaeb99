use rand::seq::SliceRandom;
use rand::SeedableRng;
use rand_chacha::ChaCha8Rng;
use serde::{Deserialize, Serialize};

use super::loss::{loss_total, BatchData, LossTerms, LossWeights, Physics};
use super::model::{input_row, task_targets, MtlModel};
use super::network::forward;
use crate::ad::{Tape, Tensor};
use crate::error::{Error, Result};
use crate::experiment::Sample;
use crate::pf::Network;

#[derive(Debug, Clone, PartialEq, Serialize, Deserialize)]
#[serde(default)]
pub struct TrainConfig {
    pub epochs: usize,
    pub batch_size: usize,
    pub learning_rate: f64,
    pub beta1: f64,
    pub beta2: f64,
    pub adam_eps: f64,
    /// Every `detach_period`-th epoch only the main task reaches the trunk.
    pub detach_period: usize,
    pub seed: u64,
    pub weights: LossWeights,
}

impl Default for TrainConfig {
    fn default() -> Self {
        Self {
            epochs: 200,
            batch_size: 64,
            learning_rate: 1e-3,
            beta1: 0.9,
            beta2: 0.999,
            adam_eps: 1e-8,
            detach_period: 2,
            seed: 0,
            weights: LossWeights::default(),
        }
    }
}

impl TrainConfig {
    pub fn validate(&self) -> Result<()> {
        if self.batch_size == 0 || self.detach_period == 0 {
            return Err(Error::Invalid("batch_size and detach_period must be at least 1".into()));
        }
        if !(self.learning_rate >= 0.0) || !(0.0..1.0).contains(&self.beta1) || !(0.0..1.0).contains(&self.beta2) {
            return Err(Error::Invalid("invalid optimizer hyperparameters".into()));
        }
        self.weights.validate()
    }
}

/// Values of the five loss terms and their weighted total. Disabled terms
/// read zero.
#[derive(Debug, Clone, Copy, Default, PartialEq, Serialize, Deserialize)]
pub struct LossValues {
    pub supervised: f64,
    pub eqn: f64,
    pub ieq: f64,
    pub lag: f64,
    pub cost: f64,
    pub total: f64,
}

impl LossValues {
    fn read(tape: &Tape, t: &LossTerms) -> Self {
        let v = |x: Option<crate::ad::Var>| x.map_or(0.0, |x| tape.value(x).item());
        Self {
            supervised: tape.value(t.supervised).item(),
            eqn: v(t.eqn),
            ieq: v(t.ieq),
            lag: v(t.lag),
            cost: v(t.cost),
            total: tape.value(t.total).item(),
        }
    }

    fn axpy(&mut self, a: f64, o: &LossValues) {
        self.supervised += a * o.supervised;
        self.eqn += a * o.eqn;
        self.ieq += a * o.ieq;
        self.lag += a * o.lag;
        self.cost += a * o.cost;
        self.total += a * o.total;
    }

    fn fields(&self) -> [f64; 6] {
        [self.supervised, self.eqn, self.ieq, self.lag, self.cost, self.total]
    }
}

#[derive(Debug, Clone, PartialEq, Serialize, Deserialize)]
pub struct EpochLog {
    pub epoch: usize,
    pub detached: bool,
    pub train: LossValues,
    pub val: Option<LossValues>,
}

#[derive(Debug, Clone, Default, PartialEq, Serialize, Deserialize)]
pub struct TrainLog {
    pub epochs: Vec<EpochLog>,
}

impl TrainLog {
    pub fn to_csv(&self) -> String {
        let mut s = String::from(
            "epoch,L,L_eqn,L_ieq,L_lag,L_fX,L_total,val_L,val_L_eqn,val_L_ieq,val_L_lag,val_L_fX,val_L_total\n",
        );
        for e in &self.epochs {
            let mut cols = vec![e.epoch.to_string()];
            cols.extend(e.train.fields().iter().map(|v| format!("{v:e}")));
            match &e.val {
                Some(v) => cols.extend(v.fields().iter().map(|v| format!("{v:e}"))),
                None => cols.extend(std::iter::repeat_n(String::new(), 6)),
            }
            s.push_str(&cols.join(","));
            s.push('\n');
        }
        s
    }
}

/// Samples converted to model space once.
struct Prepared {
    inputs: Vec<Vec<f64>>,
    targets: Vec<[Vec<f64>; 7]>,
    pd: Vec<Vec<f64>>,
    qd: Vec<Vec<f64>>,
    f0: Vec<f64>,
}

impl Prepared {
    fn new(model: &MtlModel, base_mva: f64, samples: &[Sample]) -> Self {
        let pu = |v: &[f64]| v.iter().map(|x| x / base_mva).collect::<Vec<f64>>();
        Self {
            inputs: samples
                .iter()
                .map(|s| model.input_norm.normalize(&input_row(&s.scenario.pd, &s.scenario.qd)))
                .collect(),
            targets: samples
                .iter()
                .map(|s| {
                    let raw = task_targets(&model.topology, &s.truth);
                    std::array::from_fn(|k| model.target_norms[k].normalize(&raw[k]))
                })
                .collect(),
            pd: samples.iter().map(|s| pu(&s.scenario.pd)).collect(),
            qd: samples.iter().map(|s| pu(&s.scenario.qd)).collect(),
            f0: samples.iter().map(|s| s.truth.f0).collect(),
        }
    }

    fn gather(&self, idx: &[usize]) -> Result<(Tensor, [Tensor; 7], Tensor, Tensor, Vec<f64>)> {
        let pick = |v: &Vec<Vec<f64>>| Tensor::from_rows(&idx.iter().map(|&i| v[i].as_slice()).collect::<Vec<_>>());
        let targets: [Tensor; 7] = std::array::from_fn(|k| {
            let rows: Vec<&[f64]> = idx.iter().map(|&i| self.targets[i][k].as_slice()).collect();
            Tensor::from_rows(&rows).expect("equal widths")
        });
        Ok((pick(&self.inputs)?, targets, pick(&self.pd)?, pick(&self.qd)?, idx.iter().map(|&i| self.f0[i]).collect()))
    }
}

/// Forward pass plus loss terms for one batch.
fn batch_loss(
    model: &MtlModel,
    phys: &Physics,
    prep: &Prepared,
    idx: &[usize],
    w: &LossWeights,
    detach: bool,
) -> Result<(Tape, crate::mtl::Bound, LossTerms)> {
    let (x, targets, pd, qd, f0) = prep.gather(idx)?;
    let mut tape = Tape::new();
    let input = tape.leaf(x);
    let (bound, out) = forward(&mut tape, &model.topology, &model.params, input, detach)?;
    let batch = BatchData { targets: &targets, pd: &pd, qd: &qd, f0: &f0 };
    let terms = loss_total(&mut tape, phys, &model.target_norms, &out.0, &batch, w)?;
    Ok((tape, bound, terms))
}

const EVAL_CHUNK: usize = 256;

/// Mean loss terms over `samples`, evaluated without detach.
pub fn evaluate_losses(model: &MtlModel, net: &Network, samples: &[Sample], w: &LossWeights) -> Result<LossValues> {
    let phys = Physics::new(net);
    let prep = Prepared::new(model, net.base_mva, samples);
    let idx: Vec<usize> = (0..samples.len()).collect();
    let mut acc = LossValues::default();
    for chunk in idx.chunks(EVAL_CHUNK) {
        let (tape, _, terms) = batch_loss(model, &phys, &prep, chunk, w, false)?;
        acc.axpy(chunk.len() as f64 / samples.len() as f64, &LossValues::read(&tape, &terms));
    }
    Ok(acc)
}

struct Adam {
    m: Vec<Vec<f64>>,
    v: Vec<Vec<f64>>,
    t: i32,
}

impl Adam {
    fn new(model: &MtlModel) -> Self {
        let zeros: Vec<Vec<f64>> = model.params.tensors().iter().map(|t| vec![0.0; t.len()]).collect();
        Self { m: zeros.clone(), v: zeros, t: 0 }
    }

    fn step(&mut self, model: &mut MtlModel, grads: &[Option<&Tensor>], cfg: &TrainConfig) {
        self.t += 1;
        let c1 = 1.0 - cfg.beta1.powi(self.t);
        let c2 = 1.0 - cfg.beta2.powi(self.t);
        for (k, p) in model.params.tensors_mut().into_iter().enumerate() {
            let Some(g) = grads[k] else { continue };
            for (j, (w, &g)) in p.data.iter_mut().zip(&g.data).enumerate() {
                let m = &mut self.m[k][j];
                let v = &mut self.v[k][j];
                *m = cfg.beta1 * *m + (1.0 - cfg.beta1) * g;
                *v = cfg.beta2 * *v + (1.0 - cfg.beta2) * g * g;
                *w -= cfg.learning_rate * (*m / c1) / ((*v / c2).sqrt() + cfg.adam_eps);
            }
        }
    }
}

/// Mini-batch training with periodic detach of the auxiliary heads.
pub fn train(
    model: &mut MtlModel,
    net: &Network,
    train: &[Sample],
    val: &[Sample],
    cfg: &TrainConfig,
) -> Result<TrainLog> {
    cfg.validate()?;
    model.check(Some(&net.dims))?;
    if train.is_empty() {
        return Err(Error::Invalid("no training samples".into()));
    }
    let phys = Physics::new(net);
    let prep = Prepared::new(model, net.base_mva, train);
    let mut rng = ChaCha8Rng::seed_from_u64(cfg.seed);
    let mut adam = Adam::new(model);
    let mut order: Vec<usize> = (0..train.len()).collect();
    let mut log = TrainLog::default();
    for epoch in 1..=cfg.epochs {
        let detached = epoch % cfg.detach_period == 0;
        order.shuffle(&mut rng);
        let mut acc = LossValues::default();
        for idx in order.chunks(cfg.batch_size) {
            let (tape, bound, terms) = batch_loss(model, &phys, &prep, idx, &cfg.weights, detached)?;
            let values = LossValues::read(&tape, &terms);
            if !values.total.is_finite() {
                return Err(Error::NonFinite(format!("total loss at epoch {epoch}")));
            }
            acc.axpy(idx.len() as f64 / train.len() as f64, &values);
            let grads = tape.backward(terms.total)?;
            let g: Vec<Option<&Tensor>> = bound.vars.iter().map(|v| grads.get(*v)).collect();
            adam.step(model, &g, cfg);
        }
        let val_values = if val.is_empty() {
            None
        } else {
            Some(evaluate_losses(model, net, val, &cfg.weights)?)
        };
        log::debug!("epoch {epoch}: train {:.4e} val {:?}", acc.total, val_values.map(|v| v.total));
        log.epochs.push(EpochLog { epoch, detached, train: acc, val: val_values });
    }
    Ok(log)
}
