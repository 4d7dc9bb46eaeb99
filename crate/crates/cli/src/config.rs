use std::path::Path;

use serde::Deserialize;
use smartpg::ipm::IpmOptions;
use smartpg::mtl::TrainConfig;

use crate::Failure;

#[derive(Debug, Clone, Deserialize)]
#[serde(default, deny_unknown_fields)]
pub struct Sampling {
    pub n: usize,
    pub t: f64,
    pub seed: u64,
}

impl Default for Sampling {
    fn default() -> Self {
        Self { n: 10_000, t: 0.1, seed: 0 }
    }
}

/// Settings shared by every subcommand. Loss weights live in `train.weights`.
#[derive(Debug, Clone, Default, Deserialize)]
#[serde(default, deny_unknown_fields)]
pub struct RunConfig {
    pub ipm: IpmOptions,
    pub train: TrainConfig,
    pub sampling: Sampling,
    pub workers: Option<usize>,
}

impl RunConfig {
    pub fn load(path: Option<&Path>) -> Result<Self, Failure> {
        let Some(path) = path else { return Ok(Self::default()) };
        let text = std::fs::read_to_string(path).map_err(|e| Failure::io(path, e))?;
        let cfg: Self =
            serde_json::from_str(&text).map_err(|e| Failure::invalid(format!("{}: {e}", path.display())))?;
        cfg.ipm.validate().map_err(Failure::from)?;
        cfg.train.validate().map_err(Failure::from)?;
        Ok(cfg)
    }
}
