//! Reduced KKT system assembly and solve.

use nalgebra::{DMatrix, DVector};

use crate::error::{Error, Result};
use crate::sparse::SparseMatrix;

/// Solves `[M Jgᵀ; Jg 0] [dx; dλ] = [−n; −g]` with
/// `M = Lxx + Jhᵀ diag(w) Jh`.
///
/// `jh` must be compressed (row-major sorted).
pub(crate) fn solve_reduced(
    lxx: &SparseMatrix,
    jh: &SparseMatrix,
    weights: &[f64],
    jg: &SparseMatrix,
    n: &[f64],
    g: &[f64],
) -> Result<(Vec<f64>, Vec<f64>)> {
    let nx = lxx.n_rows;
    let neq = jg.n_rows;
    let dim = nx + neq;
    let mut a = DMatrix::<f64>::zeros(dim, dim);
    for &(r, c, v) in &lxx.entries {
        a[(r, c)] += v;
    }
    let mut start = 0;
    while start < jh.entries.len() {
        let row = jh.entries[start].0;
        let mut end = start;
        while end < jh.entries.len() && jh.entries[end].0 == row {
            end += 1;
        }
        let w = weights[row];
        if w != 0.0 {
            let block = &jh.entries[start..end];
            for &(_, ci, vi) in block {
                for &(_, cj, vj) in block {
                    a[(ci, cj)] += w * vi * vj;
                }
            }
        }
        start = end;
    }
    for &(r, c, v) in &jg.entries {
        a[(nx + r, c)] += v;
        a[(c, nx + r)] += v;
    }
    let rhs = DVector::from_iterator(dim, n.iter().chain(g).map(|v| -v));
    let sol = a
        .lu()
        .solve(&rhs)
        .ok_or_else(|| Error::Numerical("singular KKT matrix".into()))?;
    if sol.iter().any(|v| !v.is_finite()) {
        return Err(Error::Numerical("non-finite Newton step".into()));
    }
    Ok((sol.rows(0, nx).iter().copied().collect(), sol.rows(nx, neq).iter().copied().collect()))
}
