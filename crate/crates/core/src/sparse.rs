//! Coordinate-form sparse matrices used by the power-flow layer.

use num_complex::Complex64;
use serde::{Deserialize, Serialize};

/// Real sparse matrix in coordinate form. Duplicate entries are summed on
/// every read.
#[derive(Debug, Clone, PartialEq, Serialize, Deserialize)]
pub struct SparseMatrix {
    pub n_rows: usize,
    pub n_cols: usize,
    pub entries: Vec<(usize, usize, f64)>,
}

impl SparseMatrix {
    pub fn new(n_rows: usize, n_cols: usize) -> Self {
        Self { n_rows, n_cols, entries: Vec::new() }
    }

    pub fn push(&mut self, row: usize, col: usize, value: f64) {
        debug_assert!(row < self.n_rows && col < self.n_cols);
        self.entries.push((row, col, value));
    }

    /// `y = A x`
    pub fn mul_vec(&self, x: &[f64]) -> Vec<f64> {
        let mut y = vec![0.0; self.n_rows];
        for &(r, c, v) in &self.entries {
            y[r] += v * x[c];
        }
        y
    }

    /// `y = Aᵀ x`
    pub fn tr_mul_vec(&self, x: &[f64]) -> Vec<f64> {
        let mut y = vec![0.0; self.n_cols];
        for &(r, c, v) in &self.entries {
            y[c] += v * x[r];
        }
        y
    }

    pub fn transpose(&self) -> SparseMatrix {
        SparseMatrix {
            n_rows: self.n_cols,
            n_cols: self.n_rows,
            entries: self.entries.iter().map(|&(r, c, v)| (c, r, v)).collect(),
        }
    }

    pub fn to_dense(&self) -> Vec<Vec<f64>> {
        let mut d = vec![vec![0.0; self.n_cols]; self.n_rows];
        for &(r, c, v) in &self.entries {
            d[r][c] += v;
        }
        d
    }

    /// Sums duplicates, drops explicit zeros and sorts row-major.
    pub fn compress(&mut self) {
        self.entries.sort_by_key(|e| (e.0, e.1));
        let mut out: Vec<(usize, usize, f64)> = Vec::with_capacity(self.entries.len());
        for &(r, c, v) in &self.entries {
            match out.last_mut() {
                Some(last) if last.0 == r && last.1 == c => last.2 += v,
                _ => out.push((r, c, v)),
            }
        }
        out.retain(|e| e.2 != 0.0);
        self.entries = out;
    }
}

/// Complex sparse matrix in coordinate form with duplicates summed.
#[derive(Debug, Clone, PartialEq, Serialize, Deserialize)]
pub struct SparseComplexMatrix {
    pub n_rows: usize,
    pub n_cols: usize,
    pub entries: Vec<(usize, usize, Complex64)>,
}

impl SparseComplexMatrix {
    pub fn new(n_rows: usize, n_cols: usize) -> Self {
        Self { n_rows, n_cols, entries: Vec::new() }
    }

    pub fn push(&mut self, row: usize, col: usize, value: Complex64) {
        debug_assert!(row < self.n_rows && col < self.n_cols);
        self.entries.push((row, col, value));
    }

    pub fn mul_vec(&self, x: &[Complex64]) -> Vec<Complex64> {
        let mut y = vec![Complex64::new(0.0, 0.0); self.n_rows];
        for &(r, c, v) in &self.entries {
            y[r] += v * x[c];
        }
        y
    }

    pub fn get(&self, row: usize, col: usize) -> Complex64 {
        self.entries
            .iter()
            .filter(|e| e.0 == row && e.1 == col)
            .map(|e| e.2)
            .sum()
    }

    pub fn to_dense(&self) -> Vec<Vec<Complex64>> {
        let mut d = vec![vec![Complex64::new(0.0, 0.0); self.n_cols]; self.n_rows];
        for &(r, c, v) in &self.entries {
            d[r][c] += v;
        }
        d
    }

    /// Sums duplicates and sorts row-major. Structural zeros are kept so the
    /// sparsity pattern reflects the network topology.
    pub fn compress(&mut self) {
        self.entries.sort_by_key(|e| (e.0, e.1));
        let mut out: Vec<(usize, usize, Complex64)> = Vec::with_capacity(self.entries.len());
        for &(r, c, v) in &self.entries {
            match out.last_mut() {
                Some(last) if last.0 == r && last.1 == c => last.2 += v,
                _ => out.push((r, c, v)),
            }
        }
        self.entries = out;
    }

    /// Real and imaginary parts as two real sparse matrices.
    pub fn split(&self) -> (SparseMatrix, SparseMatrix) {
        let mut re = SparseMatrix::new(self.n_rows, self.n_cols);
        let mut im = SparseMatrix::new(self.n_rows, self.n_cols);
        for &(r, c, v) in &self.entries {
            re.push(r, c, v.re);
            im.push(r, c, v.im);
        }
        (re, im)
    }
}

#[cfg(test)]
mod tests {
    use super::*;

    #[test]
    fn duplicates_are_summed() {
        let mut m = SparseMatrix::new(2, 2);
        m.push(0, 1, 1.5);
        m.push(0, 1, 2.0);
        m.push(1, 0, 1.0);
        assert_eq!(m.mul_vec(&[1.0, 1.0]), vec![3.5, 1.0]);
        assert_eq!(m.tr_mul_vec(&[1.0, 0.0]), vec![0.0, 3.5]);
        m.compress();
        assert_eq!(m.entries, vec![(0, 1, 3.5), (1, 0, 1.0)]);
    }
}
