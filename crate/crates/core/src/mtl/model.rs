use std::path::Path;

use rand::SeedableRng;
use rand_chacha::ChaCha8Rng;
use serde::{Deserialize, Serialize};

use super::network::{forward, Params};
use super::normalize::{NormMode, Normalizer};
use super::topology::{Architecture, MtlTopology};
use super::Task;
use crate::ad::{Tape, Tensor};
use crate::case::Dimensions;
use crate::error::{Error, Result};
use crate::experiment::{GroundTruth, Sample};
use crate::ipm::WarmStart;

pub const FORMAT_VERSION: u32 = 1;

/// Physical-unit prediction per task, in [`Task::ALL`] order.
#[derive(Debug, Clone, PartialEq)]
pub struct Prediction(pub [Vec<f64>; 7]);

impl Prediction {
    pub fn get(&self, t: Task) -> &[f64] {
        &self.0[t.index()]
    }

    pub fn x(&self) -> Vec<f64> {
        Task::X.iter().flat_map(|t| self.get(*t).iter().copied()).collect()
    }

    pub fn warm_start(&self) -> WarmStart {
        WarmStart {
            x: Some(self.x()),
            lambda: Some(self.get(Task::Lambda).to_vec()),
            mu: Some(self.get(Task::Mu).to_vec()),
            z: Some(self.get(Task::Z).to_vec()),
        }
    }
}

#[derive(Debug, Clone, PartialEq, Serialize, Deserialize)]
pub struct MtlModel {
    pub topology: MtlTopology,
    pub input_norm: Normalizer,
    /// One per task, in [`Task::ALL`] order.
    pub target_norms: Vec<Normalizer>,
    pub params: Params,
}

#[derive(Serialize, Deserialize)]
struct ModelFile {
    format_version: u32,
    kind: Architecture,
    topology: MtlTopology,
    normalizers: Normalizers,
    params: Params,
}

#[derive(Serialize, Deserialize)]
struct Normalizers {
    input: Normalizer,
    targets: Vec<Normalizer>,
}

pub(crate) fn input_row(pd: &[f64], qd: &[f64]) -> Vec<f64> {
    [pd, qd].concat()
}

/// Splits a ground-truth bundle into per-task vectors.
pub(crate) fn task_targets(topo: &MtlTopology, t: &GroundTruth) -> [Vec<f64>; 7] {
    let w = |k: Task| topo.head(k).output_dim;
    let (nb, ng) = (w(Task::Va), w(Task::Pg));
    [
        t.x[..nb].to_vec(),
        t.x[nb..2 * nb].to_vec(),
        t.x[2 * nb..2 * nb + ng].to_vec(),
        t.x[2 * nb + ng..].to_vec(),
        t.lambda.clone(),
        t.mu.clone(),
        t.z.clone(),
    ]
}

impl MtlModel {
    /// Fits normalizers on `train` and draws seeded initial weights.
    pub fn new(topology: MtlTopology, train: &[Sample], seed: u64) -> Result<Self> {
        let inputs: Vec<Vec<f64>> = train.iter().map(|s| input_row(&s.scenario.pd, &s.scenario.qd)).collect();
        let input_norm = Normalizer::fit(NormMode::Standardize, &inputs)?;
        let targets: Vec<[Vec<f64>; 7]> = train.iter().map(|s| task_targets(&topology, &s.truth)).collect();
        let target_norms = Task::ALL
            .iter()
            .map(|&t| {
                let mode = if t.bounded() { NormMode::MinMax } else { NormMode::Standardize };
                let rows: Vec<&[f64]> = targets.iter().map(|r| r[t.index()].as_slice()).collect();
                Normalizer::fit(mode, &rows)
            })
            .collect::<Result<Vec<_>>>()?;
        if input_norm.dim() != topology.input_dim {
            return Err(Error::Dimension("sample loads do not match the topology".into()));
        }
        let params = Params::init(&topology, &mut ChaCha8Rng::seed_from_u64(seed));
        Ok(Self { topology, input_norm, target_norms, params })
    }

    /// Normalized inputs for a batch of `(pd, qd)` pairs in MW / MVAr.
    pub fn input_tensor(&self, loads: &[(&[f64], &[f64])]) -> Result<Tensor> {
        let rows: Vec<Vec<f64>> = loads
            .iter()
            .map(|(p, q)| {
                let r = input_row(p, q);
                if r.len() != self.topology.input_dim {
                    return Err(Error::Dimension(format!(
                        "load vector of length {} for a model expecting {}",
                        r.len(),
                        self.topology.input_dim
                    )));
                }
                Ok(self.input_norm.normalize(&r))
            })
            .collect::<Result<_>>()?;
        Tensor::from_rows(&rows)
    }

    pub fn predict_batch(&self, loads: &[(&[f64], &[f64])]) -> Result<Vec<Prediction>> {
        if loads.is_empty() {
            return Ok(Vec::new());
        }
        let x = self.input_tensor(loads)?;
        let mut tape = Tape::new();
        let input = tape.leaf(x);
        let (_, out) = forward(&mut tape, &self.topology, &self.params, input, false)?;
        Ok((0..loads.len())
            .map(|r| {
                Prediction(std::array::from_fn(|k| {
                    self.target_norms[k].denormalize(tape.value(out.0[k]).row_slice(r))
                }))
            })
            .collect())
    }

    pub fn predict(&self, pd: &[f64], qd: &[f64]) -> Result<Prediction> {
        Ok(self.predict_batch(&[(pd, qd)])?.remove(0))
    }

    /// Full warm start for one load profile.
    pub fn predict_warm_start(&self, pd: &[f64], qd: &[f64]) -> Result<WarmStart> {
        Ok(self.predict(pd, qd)?.warm_start())
    }

    pub fn to_json(&self) -> Result<String> {
        let file = ModelFile {
            format_version: FORMAT_VERSION,
            kind: self.topology.architecture,
            topology: self.topology.clone(),
            normalizers: Normalizers { input: self.input_norm.clone(), targets: self.target_norms.clone() },
            params: self.params.clone(),
        };
        Ok(serde_json::to_string(&file)?)
    }

    /// Parses a model document, optionally checking it against a case.
    pub fn from_json(text: &str, dims: Option<&Dimensions>) -> Result<Self> {
        let value: serde_json::Value =
            serde_json::from_str(text).map_err(|e| Error::Schema(format!("model file: {e}")))?;
        let version = &value["format_version"];
        if version.as_u64() != Some(FORMAT_VERSION as u64) {
            let found = match version {
                serde_json::Value::String(s) => s.clone(),
                other => other.to_string(),
            };
            return Err(Error::Version { found, expected: FORMAT_VERSION.to_string() });
        }
        let file: ModelFile =
            serde_json::from_value(value).map_err(|e| Error::Schema(format!("model file: {e}")))?;
        if file.kind != file.topology.architecture {
            return Err(Error::Schema("model kind disagrees with its topology".into()));
        }
        let model = Self {
            topology: file.topology,
            input_norm: file.normalizers.input,
            target_norms: file.normalizers.targets,
            params: file.params,
        };
        model.check(dims)?;
        Ok(model)
    }

    pub fn check(&self, dims: Option<&Dimensions>) -> Result<()> {
        self.params.check(&self.topology)?;
        let widths_ok = self.input_norm.dim() == self.topology.input_dim
            && self.target_norms.len() == 7
            && self.target_norms.iter().zip(&self.topology.heads).all(|(n, h)| n.dim() == h.output_dim);
        if !widths_ok {
            return Err(Error::Dimension("normalizers do not match the topology".into()));
        }
        if let Some(d) = dims {
            self.topology.validate(d)?;
        }
        Ok(())
    }

    pub fn save(&self, path: &Path) -> Result<()> {
        std::fs::write(path, self.to_json()?)?;
        Ok(())
    }

    pub fn load(path: &Path, dims: Option<&Dimensions>) -> Result<Self> {
        Self::from_json(&std::fs::read_to_string(path)?, dims)
    }
}
