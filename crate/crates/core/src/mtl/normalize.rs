use serde::{Deserialize, Serialize};

use crate::error::{Error, Result};

const SCALE_FLOOR: f64 = 1e-12;

#[derive(Debug, Clone, Copy, PartialEq, Eq, Serialize, Deserialize)]
#[serde(rename_all = "lowercase")]
pub enum NormMode {
    Standardize,
    MinMax,
}

/// Per-feature affine map `(x − shift) / scale`.
#[derive(Debug, Clone, PartialEq, Serialize, Deserialize)]
pub struct Normalizer {
    pub mode: NormMode,
    pub shift: Vec<f64>,
    pub scale: Vec<f64>,
}

impl Normalizer {
    pub fn fit<R: AsRef<[f64]>>(mode: NormMode, rows: &[R]) -> Result<Self> {
        let Some(first) = rows.first() else {
            return Err(Error::Invalid("cannot fit a normalizer on no data".into()));
        };
        let d = first.as_ref().len();
        let n = rows.len() as f64;
        let (shift, scale) = match mode {
            NormMode::Standardize => {
                let mut mean = vec![0.0; d];
                for r in rows {
                    mean.iter_mut().zip(r.as_ref()).for_each(|(m, v)| *m += v / n);
                }
                let mut var = vec![0.0; d];
                for r in rows {
                    for ((s, v), m) in var.iter_mut().zip(r.as_ref()).zip(&mean) {
                        *s += (v - m) * (v - m) / n;
                    }
                }
                (mean, var.into_iter().map(|v| v.sqrt().max(SCALE_FLOOR)).collect())
            }
            NormMode::MinMax => {
                let mut lo = vec![f64::INFINITY; d];
                let mut hi = vec![f64::NEG_INFINITY; d];
                for r in rows {
                    for (j, &v) in r.as_ref().iter().enumerate() {
                        lo[j] = lo[j].min(v);
                        hi[j] = hi[j].max(v);
                    }
                }
                let scale = lo.iter().zip(&hi).map(|(l, h)| (h - l).max(SCALE_FLOOR)).collect();
                (lo, scale)
            }
        };
        Ok(Self { mode, shift, scale })
    }

    pub fn dim(&self) -> usize {
        self.shift.len()
    }

    pub fn normalize(&self, x: &[f64]) -> Vec<f64> {
        x.iter().zip(&self.shift).zip(&self.scale).map(|((x, s), k)| (x - s) / k).collect()
    }

    pub fn denormalize(&self, y: &[f64]) -> Vec<f64> {
        y.iter().zip(&self.shift).zip(&self.scale).map(|((y, s), k)| y * k + s).collect()
    }
}
