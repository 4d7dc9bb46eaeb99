use serde::{Deserialize, Serialize};

use crate::error::{Error, Result};

/// Dense row-major matrix of doubles. Vectors are `1 × n` rows and scalars
/// are `1 × 1`.
#[derive(Debug, Clone, PartialEq, Serialize, Deserialize)]
pub struct Tensor {
    pub rows: usize,
    pub cols: usize,
    pub data: Vec<f64>,
}

impl Tensor {
    pub fn new(rows: usize, cols: usize, data: Vec<f64>) -> Result<Self> {
        if data.len() != rows * cols {
            return Err(Error::Shape {
                op: "tensor",
                detail: format!("{} values for shape {rows}x{cols}", data.len()),
            });
        }
        Ok(Self { rows, cols, data })
    }

    pub fn zeros(rows: usize, cols: usize) -> Self {
        Self { rows, cols, data: vec![0.0; rows * cols] }
    }

    pub fn full(rows: usize, cols: usize, value: f64) -> Self {
        Self { rows, cols, data: vec![value; rows * cols] }
    }

    pub fn scalar(v: f64) -> Self {
        Self { rows: 1, cols: 1, data: vec![v] }
    }

    pub fn row(values: &[f64]) -> Self {
        Self { rows: 1, cols: values.len(), data: values.to_vec() }
    }

    /// Stacks equally long rows.
    pub fn from_rows<R: AsRef<[f64]>>(rows: &[R]) -> Result<Self> {
        let cols = rows.first().map_or(0, |r| r.as_ref().len());
        let mut data = Vec::with_capacity(rows.len() * cols);
        for r in rows {
            let r = r.as_ref();
            if r.len() != cols {
                return Err(Error::Shape { op: "from_rows", detail: "ragged rows".into() });
            }
            data.extend_from_slice(r);
        }
        Ok(Self { rows: rows.len(), cols, data })
    }

    pub fn shape(&self) -> (usize, usize) {
        (self.rows, self.cols)
    }

    pub fn len(&self) -> usize {
        self.data.len()
    }

    pub fn is_empty(&self) -> bool {
        self.data.is_empty()
    }

    pub fn get(&self, r: usize, c: usize) -> f64 {
        self.data[r * self.cols + c]
    }

    pub fn row_slice(&self, r: usize) -> &[f64] {
        &self.data[r * self.cols..(r + 1) * self.cols]
    }

    /// The single value of a `1 × 1` tensor.
    pub fn item(&self) -> f64 {
        debug_assert_eq!(self.data.len(), 1);
        self.data[0]
    }

    pub fn is_finite(&self) -> bool {
        self.data.iter().all(|v| v.is_finite())
    }
}

const PAR_THRESHOLD: usize = 1 << 15;

fn rows_apply<F>(out: &mut [f64], cols: usize, work: usize, f: F)
where
    F: Fn(usize, &mut [f64]) + Sync + Send,
{
    use rayon::prelude::*;
    if cols == 0 {
        return;
    }
    if work >= PAR_THRESHOLD {
        out.par_chunks_mut(cols).enumerate().for_each(|(i, row)| f(i, row));
    } else {
        out.chunks_mut(cols).enumerate().for_each(|(i, row)| f(i, row));
    }
}

/// `A · B`
pub(crate) fn matmul_nn(a: &Tensor, b: &Tensor) -> Tensor {
    let (n, k, m) = (a.rows, a.cols, b.cols);
    let mut out = vec![0.0; n * m];
    rows_apply(&mut out, m, n * k * m, |i, row| {
        for (p, &av) in a.row_slice(i).iter().enumerate() {
            if av != 0.0 {
                for (o, &bv) in row.iter_mut().zip(&b.data[p * m..(p + 1) * m]) {
                    *o += av * bv;
                }
            }
        }
    });
    Tensor { rows: n, cols: m, data: out }
}

/// `A · Bᵀ`
pub(crate) fn matmul_nt(a: &Tensor, b: &Tensor) -> Tensor {
    let (n, k, m) = (a.rows, a.cols, b.rows);
    let mut out = vec![0.0; n * m];
    rows_apply(&mut out, m, n * k * m, |i, row| {
        let ar = a.row_slice(i);
        for (j, o) in row.iter_mut().enumerate() {
            *o = ar.iter().zip(b.row_slice(j)).map(|(x, y)| x * y).sum();
        }
    });
    Tensor { rows: n, cols: m, data: out }
}

/// `Aᵀ · B`
pub(crate) fn matmul_tn(a: &Tensor, b: &Tensor) -> Tensor {
    let (n, k, m) = (a.cols, a.rows, b.cols);
    let mut out = vec![0.0; n * m];
    rows_apply(&mut out, m, n * k * m, |i, row| {
        for p in 0..k {
            let av = a.data[p * a.cols + i];
            if av != 0.0 {
                for (o, &bv) in row.iter_mut().zip(b.row_slice(p)) {
                    *o += av * bv;
                }
            }
        }
    });
    Tensor { rows: n, cols: m, data: out }
}
