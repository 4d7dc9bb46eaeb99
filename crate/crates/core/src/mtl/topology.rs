use serde::{Deserialize, Serialize};

use super::Task;
use crate::case::Dimensions;
use crate::error::{Error, Result};

#[derive(Debug, Clone, Copy, PartialEq, Eq, Serialize, Deserialize)]
#[serde(rename_all = "lowercase")]
pub enum Activation {
    Linear,
    Sigmoid,
}

#[derive(Debug, Clone, PartialEq, Eq, Serialize, Deserialize)]
pub struct HeadSpec {
    pub task: Task,
    pub hidden: Vec<usize>,
    pub output_dim: usize,
    pub activation: Activation,
}

/// Whether the seven heads share one trunk or each own a private one.
#[derive(Debug, Clone, Copy, PartialEq, Eq, Serialize, Deserialize)]
#[serde(rename_all = "lowercase")]
pub enum Architecture {
    Shared,
    Separate,
}

#[derive(Debug, Clone, PartialEq, Eq, Serialize, Deserialize)]
pub struct MtlTopology {
    pub architecture: Architecture,
    pub input_dim: usize,
    /// Trunk widths; in separate mode every private trunk uses them.
    pub shared_dims: Vec<usize>,
    /// Heads in [`Task::ALL`] order.
    pub heads: Vec<HeadSpec>,
}

fn trunk_widths(input: usize, scale: f64) -> Vec<usize> {
    (0..5)
        .map(|i| ((input as f64 * (1.0 + 0.2 * i as f64) * scale).round() as usize).max(1))
        .collect()
}

fn heads(dims: &Dimensions, hidden: usize) -> Vec<HeadSpec> {
    Task::ALL
        .iter()
        .map(|&task| HeadSpec {
            task,
            hidden: vec![hidden],
            output_dim: task.width(dims),
            activation: if task.bounded() { Activation::Sigmoid } else { Activation::Linear },
        })
        .collect()
}

/// Shared-trunk topology: five trunk layers growing by 0.2 × input each.
pub fn build_topology(dims: &Dimensions) -> MtlTopology {
    let input_dim = 2 * dims.n_bus;
    let shared_dims = trunk_widths(input_dim, 1.0);
    let last = *shared_dims.last().unwrap_or(&input_dim);
    MtlTopology { architecture: Architecture::Shared, input_dim, shared_dims, heads: heads(dims, last) }
}

/// Seven independent networks with widths scaled so the total parameter
/// count is as close as possible to the shared topology's.
pub fn build_separate_topology(dims: &Dimensions) -> MtlTopology {
    let target = build_topology(dims).parameter_count();
    let input_dim = 2 * dims.n_bus;
    let make = |scale: f64| {
        let shared_dims = trunk_widths(input_dim, scale);
        let last = *shared_dims.last().unwrap();
        MtlTopology { architecture: Architecture::Separate, input_dim, shared_dims, heads: heads(dims, last) }
    };
    let mut best = make(1.0);
    let mut best_gap = best.parameter_count().abs_diff(target);
    for step in 1..=400 {
        let t = make(step as f64 / 200.0);
        let gap = t.parameter_count().abs_diff(target);
        if gap < best_gap {
            best = t;
            best_gap = gap;
        }
    }
    best
}

impl MtlTopology {
    pub fn trunk_count(&self) -> usize {
        match self.architecture {
            Architecture::Shared => 1,
            Architecture::Separate => Task::ALL.len(),
        }
    }

    pub fn last_trunk_width(&self) -> usize {
        *self.shared_dims.last().unwrap_or(&self.input_dim)
    }

    /// Input width of each head, honouring the hierarchy in shared mode.
    pub fn head_input_dim(&self, task: Task) -> usize {
        let t = self.last_trunk_width();
        if self.architecture == Architecture::Separate {
            return t;
        }
        let x: usize = Task::X.iter().map(|&k| self.head(k).output_dim).sum();
        match task {
            Task::Z => t + x,
            Task::Mu => t + x + self.head(Task::Z).output_dim,
            _ => t,
        }
    }

    pub fn head(&self, task: Task) -> &HeadSpec {
        &self.heads[task.index()]
    }

    /// `(fan_in, fan_out)` of every layer: trunks first, then heads.
    pub fn layer_shapes(&self) -> Vec<(usize, usize)> {
        let mut out = Vec::new();
        for _ in 0..self.trunk_count() {
            let mut prev = self.input_dim;
            for &w in &self.shared_dims {
                out.push((prev, w));
                prev = w;
            }
        }
        for h in &self.heads {
            let mut prev = self.head_input_dim(h.task);
            for &w in h.hidden.iter().chain(std::iter::once(&h.output_dim)) {
                out.push((prev, w));
                prev = w;
            }
        }
        out
    }

    pub fn parameter_count(&self) -> usize {
        self.layer_shapes().iter().map(|(i, o)| i * o + o).sum()
    }

    pub fn validate(&self, dims: &Dimensions) -> Result<()> {
        if self.input_dim != 2 * dims.n_bus || self.heads.len() != Task::ALL.len() {
            return Err(Error::Dimension("model input does not match the case".into()));
        }
        for (h, &task) in self.heads.iter().zip(Task::ALL.iter()) {
            if h.task != task || h.output_dim != task.width(dims) {
                return Err(Error::Dimension(format!("{:?} head does not match the case", task)));
            }
        }
        Ok(())
    }
}

#[cfg(test)]
mod tests {
    use super::*;

    fn dims(n_bus: usize, n_gen: usize, n_ineq: usize) -> Dimensions {
        Dimensions {
            n_bus,
            n_gen,
            n_branch: 0,
            n_x: 2 * n_bus + 2 * n_gen,
            n_eq: 2 * n_bus + 1,
            n_ineq,
        }
    }

    #[test]
    fn widths_for_three_hundred_buses() {
        let t = build_topology(&dims(300, 69, 876));
        assert_eq!(t.input_dim, 600);
        assert_eq!(t.shared_dims, vec![600, 720, 840, 960, 1080]);
        assert_eq!(t.head(Task::Lambda).output_dim, 601);
    }

    #[test]
    fn widths_for_fourteen_buses() {
        let t = build_topology(&dims(14, 5, 48));
        assert_eq!(t.input_dim, 28);
        assert_eq!(t.shared_dims, vec![28, 34, 39, 45, 50]);
        assert_eq!(t.head(Task::Z).activation, Activation::Sigmoid);
        assert_eq!(t.head(Task::Va).activation, Activation::Linear);
        assert_eq!(t.head_input_dim(Task::Z), 50 + 38);
        assert_eq!(t.head_input_dim(Task::Mu), 50 + 38 + 48);
    }

    #[test]
    fn separate_topology_matches_parameter_budget() {
        let d = dims(9, 3, 54);
        let shared = build_topology(&d).parameter_count() as f64;
        let sep = build_separate_topology(&d);
        assert_eq!(sep.trunk_count(), 7);
        let rel = (sep.parameter_count() as f64 - shared).abs() / shared;
        assert!(rel < 0.05, "{rel}");
    }
}
