//! Function-preserving growth of the last trunk layer.

use rand::SeedableRng;
use rand_chacha::ChaCha8Rng;

use super::model::MtlModel;
use super::network::Layer;
use super::topology::Architecture;
use crate::ad::Tensor;
use crate::error::{Error, Result};

fn shared_only(model: &MtlModel) -> Result<()> {
    if model.topology.architecture != Architecture::Shared || model.topology.shared_dims.is_empty() {
        return Err(Error::Invalid("morphism needs a shared trunk".into()));
    }
    Ok(())
}

/// Inserts `extra` zero rows at `at` in a fan-in × fan-out weight matrix.
fn insert_rows(w: &Tensor, at: usize, extra: usize) -> Tensor {
    let mut data = Vec::with_capacity((w.rows + extra) * w.cols);
    data.extend_from_slice(&w.data[..at * w.cols]);
    data.extend(std::iter::repeat_n(0.0, extra * w.cols));
    data.extend_from_slice(&w.data[at * w.cols..]);
    Tensor { rows: w.rows + extra, cols: w.cols, data }
}

/// Widens the last trunk layer by `fraction` (rounded, at least one unit).
/// New units get random incoming weights and zero outgoing weights, so the
/// network computes the same function.
pub fn widen(model: &mut MtlModel, fraction: f64, seed: u64) -> Result<usize> {
    shared_only(model)?;
    let old = model.topology.last_trunk_width();
    let extra = ((old as f64 * fraction).round() as usize).max(1);
    let trunk = &mut model.params.trunks[0];
    let last = trunk.last_mut().expect("non-empty trunk");
    let fresh = Layer::init(&mut ChaCha8Rng::seed_from_u64(seed), last.w.rows, extra);
    let mut data = Vec::with_capacity(last.w.rows * (old + extra));
    for r in 0..last.w.rows {
        data.extend_from_slice(last.w.row_slice(r));
        data.extend_from_slice(fresh.w.row_slice(r));
    }
    last.w = Tensor { rows: last.w.rows, cols: old + extra, data };
    last.b.data.extend(std::iter::repeat_n(0.0, extra));
    last.b.cols += extra;
    for head in &mut model.params.heads {
        let first = &mut head[0];
        first.w = insert_rows(&first.w, old, extra);
    }
    *model.topology.shared_dims.last_mut().expect("non-empty trunk") = old + extra;
    Ok(old + extra)
}

/// Appends an identity-initialized layer to the trunk. Trunk outputs are
/// post-ReLU and therefore non-negative, so the function is unchanged.
pub fn deepen(model: &mut MtlModel) -> Result<()> {
    shared_only(model)?;
    let w = model.topology.last_trunk_width();
    let mut layer = Layer::zeros(w, w);
    for i in 0..w {
        layer.w.data[i * w + i] = 1.0;
    }
    model.params.trunks[0].push(layer);
    model.topology.shared_dims.push(w);
    Ok(())
}
