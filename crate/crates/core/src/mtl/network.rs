use rand::Rng;
use serde::{Deserialize, Serialize};

use super::topology::{Activation, Architecture, MtlTopology};
use super::Task;
use crate::ad::{Tape, Tensor, Var};
use crate::error::{Error, Result};

/// Fully connected layer `y = x·W + b` with `W` stored fan-in × fan-out.
#[derive(Debug, Clone, PartialEq, Serialize, Deserialize)]
pub struct Layer {
    pub w: Tensor,
    pub b: Tensor,
}

impl Layer {
    /// He-uniform weights, zero bias.
    pub fn init<R: Rng>(rng: &mut R, fan_in: usize, fan_out: usize) -> Self {
        let a = (6.0 / fan_in.max(1) as f64).sqrt();
        let data = (0..fan_in * fan_out).map(|_| rng.gen_range(-a..a)).collect();
        Self { w: Tensor { rows: fan_in, cols: fan_out, data }, b: Tensor::zeros(1, fan_out) }
    }

    pub fn zeros(fan_in: usize, fan_out: usize) -> Self {
        Self { w: Tensor::zeros(fan_in, fan_out), b: Tensor::zeros(1, fan_out) }
    }
}

/// All weights of a network: trunk layers, then head layers, each in task
/// order.
#[derive(Debug, Clone, PartialEq, Serialize, Deserialize)]
pub struct Params {
    pub trunks: Vec<Vec<Layer>>,
    pub heads: Vec<Vec<Layer>>,
}

impl Params {
    pub fn init<R: Rng>(topo: &MtlTopology, rng: &mut R) -> Self {
        let shapes = topo.layer_shapes();
        let mut it = shapes.into_iter();
        let trunks = (0..topo.trunk_count())
            .map(|_| topo.shared_dims.iter().map(|_| {
                let (i, o) = it.next().unwrap();
                Layer::init(rng, i, o)
            }).collect())
            .collect();
        let heads = topo
            .heads
            .iter()
            .map(|h| (0..=h.hidden.len()).map(|_| {
                let (i, o) = it.next().unwrap();
                Layer::init(rng, i, o)
            }).collect())
            .collect();
        Self { trunks, heads }
    }

    pub fn layers(&self) -> impl Iterator<Item = &Layer> {
        self.trunks.iter().flatten().chain(self.heads.iter().flatten())
    }

    pub fn layers_mut(&mut self) -> impl Iterator<Item = &mut Layer> {
        self.trunks.iter_mut().flatten().chain(self.heads.iter_mut().flatten())
    }

    /// Every weight and bias tensor in a fixed order.
    pub fn tensors(&self) -> Vec<&Tensor> {
        self.layers().flat_map(|l| [&l.w, &l.b]).collect()
    }

    pub fn tensors_mut(&mut self) -> Vec<&mut Tensor> {
        self.layers_mut().flat_map(|l| [&mut l.w, &mut l.b]).collect()
    }

    pub fn check(&self, topo: &MtlTopology) -> Result<()> {
        let shapes = topo.layer_shapes();
        let have: Vec<(usize, usize)> = self.layers().map(|l| l.w.shape()).collect();
        let biases_ok = self.layers().all(|l| l.b.shape() == (1, l.w.cols));
        if have != shapes || !biases_ok || self.trunks.len() != topo.trunk_count() {
            return Err(Error::Dimension("weights do not match the topology".into()));
        }
        Ok(())
    }
}

/// Parameter nodes of one forward pass, in [`Params::tensors`] order.
pub struct Bound {
    pub vars: Vec<Var>,
}

/// Head outputs in normalized space, indexed by [`Task::index`].
#[derive(Debug, Clone, Copy)]
pub struct Outputs(pub [Var; 7]);

impl Outputs {
    pub fn get(&self, t: Task) -> Var {
        self.0[t.index()]
    }
}

fn dense(tape: &mut Tape, x: Var, w: Var, b: Var) -> Result<Var> {
    let y = tape.matmul(x, w)?;
    tape.add(y, b)
}

/// Records the network on `tape`. With `detach_aux` set, the auxiliary heads
/// (λ, μ, Z) see detached copies of the trunk features and of the predicted
/// `X`, so their losses cannot move the trunk or the main heads.
pub fn forward(
    tape: &mut Tape,
    topo: &MtlTopology,
    params: &Params,
    input: Var,
    detach_aux: bool,
) -> Result<(Bound, Outputs)> {
    let mut vars = Vec::new();
    let mut bind = |tape: &mut Tape, l: &Layer| {
        let w = tape.leaf(l.w.clone());
        let b = tape.leaf(l.b.clone());
        vars.push(w);
        vars.push(b);
        (w, b)
    };
    let mut trunk_out = Vec::with_capacity(params.trunks.len());
    for trunk in &params.trunks {
        let mut h = input;
        for l in trunk {
            let (w, b) = bind(tape, l);
            let z = dense(tape, h, w, b)?;
            h = tape.relu(z)?;
        }
        trunk_out.push(h);
    }
    let head_layers: Vec<Vec<(Var, Var)>> = params
        .heads
        .iter()
        .map(|layers| layers.iter().map(|l| bind(tape, l)).collect())
        .collect();

    let run_head = |tape: &mut Tape, task: Task, x: Var| -> Result<Var> {
        let layers = &head_layers[task.index()];
        let mut h = x;
        for (k, &(w, b)) in layers.iter().enumerate() {
            let z = dense(tape, h, w, b)?;
            h = if k + 1 < layers.len() {
                tape.relu(z)?
            } else if topo.head(task).activation == Activation::Sigmoid {
                tape.sigmoid(z)?
            } else {
                z
            };
        }
        Ok(h)
    };

    let mut out = [input; 7];
    match topo.architecture {
        Architecture::Separate => {
            for (&task, &t) in Task::ALL.iter().zip(&trunk_out) {
                let t = if detach_aux && task.auxiliary() { tape.detach(t) } else { t };
                out[task.index()] = run_head(tape, task, t)?;
            }
        }
        Architecture::Shared => {
            let trunk = trunk_out[0];
            for task in Task::X {
                out[task.index()] = run_head(tape, task, trunk)?;
            }
            let x_parts: Vec<Var> = Task::X.iter().map(|t| out[t.index()]).collect();
            let x = tape.concat(&x_parts)?;
            let (t_aux, x_aux) = if detach_aux {
                (tape.detach(trunk), tape.detach(x))
            } else {
                (trunk, x)
            };
            out[Task::Lambda.index()] = run_head(tape, Task::Lambda, t_aux)?;
            let z_in = tape.concat(&[t_aux, x_aux])?;
            let z = run_head(tape, Task::Z, z_in)?;
            out[Task::Z.index()] = z;
            let mu_in = tape.concat(&[t_aux, x_aux, z])?;
            out[Task::Mu.index()] = run_head(tape, Task::Mu, mu_in)?;
        }
    }
    Ok((Bound { vars }, Outputs(out)))
}

#[cfg(test)]
mod tests {
    use super::*;
    use crate::case::Dimensions;
    use crate::mtl::topology::{build_separate_topology, build_topology};
    use rand::SeedableRng;
    use rand_chacha::ChaCha8Rng;

    fn dims() -> Dimensions {
        Dimensions { n_bus: 3, n_gen: 2, n_branch: 3, n_x: 10, n_eq: 7, n_ineq: 8 }
    }

    fn run(topo: &MtlTopology, p: &Params, x: &Tensor) -> Vec<Tensor> {
        let mut t = Tape::new();
        let i = t.leaf(x.clone());
        let (_, o) = forward(&mut t, topo, p, i, false).unwrap();
        o.0.iter().map(|v| t.value(*v).clone()).collect()
    }

    fn input() -> Tensor {
        Tensor::new(2, 6, vec![0.3, -1.0, 0.5, 2.0, 0.1, -0.4, 1.0, 0.2, -0.3, 0.0, 0.7, 1.1]).unwrap()
    }

    #[test]
    fn zero_weights_give_closed_form_outputs() {
        let topo = build_topology(&dims());
        let mut p = Params::init(&topo, &mut ChaCha8Rng::seed_from_u64(0));
        for t in p.tensors_mut() {
            t.data.iter_mut().for_each(|v| *v = 0.0);
        }
        for (task, out) in Task::ALL.iter().zip(run(&topo, &p, &input())) {
            let expect = if task.bounded() { 0.5 } else { 0.0 };
            assert!(out.data.iter().all(|&v| v == expect), "{task:?}");
        }
    }

    #[test]
    fn hierarchy_is_acyclic() {
        let topo = build_topology(&dims());
        let p = Params::init(&topo, &mut ChaCha8Rng::seed_from_u64(1));
        let base = run(&topo, &p, &input());
        for (task, changed) in [(Task::Z, &[Task::Z, Task::Mu][..]), (Task::Mu, &[Task::Mu][..])] {
            let mut q = p.clone();
            q.heads[task.index()][0].w.data[0] += 0.5;
            q.heads[task.index()][1].b.data[0] += 0.5;
            let out = run(&topo, &q, &input());
            for t in Task::ALL {
                let same = out[t.index()] == base[t.index()];
                assert_eq!(same, !changed.contains(&t), "{task:?} -> {t:?}");
            }
        }
    }

    #[test]
    fn trunk_perturbation_reaches_every_head() {
        let topo = build_topology(&dims());
        let p = Params::init(&topo, &mut ChaCha8Rng::seed_from_u64(2));
        let base = run(&topo, &p, &input());
        let mut q = p.clone();
        q.trunks[0][0].w.data.iter_mut().for_each(|v| *v *= 1.1);
        let out = run(&topo, &q, &input());
        for t in Task::ALL {
            assert_ne!(out[t.index()], base[t.index()], "{t:?}");
        }
    }

    #[test]
    fn separate_networks_are_independent() {
        let topo = build_separate_topology(&dims());
        let p = Params::init(&topo, &mut ChaCha8Rng::seed_from_u64(3));
        p.check(&topo).unwrap();
        let base = run(&topo, &p, &input());
        let mut q = p.clone();
        q.trunks[Task::Pg.index()][0].w.data[0] += 1.0;
        let out = run(&topo, &q, &input());
        for t in Task::ALL {
            assert_eq!(out[t.index()] == base[t.index()], t != Task::Pg);
        }
    }
}
