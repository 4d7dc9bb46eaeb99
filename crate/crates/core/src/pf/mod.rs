//! Smooth functions of the OPF vector and their analytic derivatives.
//!
//! The optimization vector is always laid out as `[va | vm | pg | qg]`
//! (radians, p.u., p.u., p.u.) over all buses and in-service generators.

mod power;
pub(crate) mod terms;

pub use power::{
    bus_injections, cost_f, flow_jacobian, grad_f, hess_lagrangian, hess_lagrangian_scaled,
    inequality_h, jacobians, residual_g,
};

use num_complex::Complex64;
use serde::{Deserialize, Serialize};

use crate::case::{branch_admittances, build_ybus, BranchAdmittance, Dimensions, GridCase};
use crate::error::{Error, Result};
use crate::sparse::{SparseComplexMatrix, SparseMatrix};

/// Structured view of the optimization vector.
#[derive(Debug, Clone, PartialEq, Serialize, Deserialize)]
pub struct OpfVector {
    pub va: Vec<f64>,
    pub vm: Vec<f64>,
    pub pg: Vec<f64>,
    pub qg: Vec<f64>,
}

impl OpfVector {
    pub fn flatten(&self) -> Vec<f64> {
        [&self.va[..], &self.vm, &self.pg, &self.qg].concat()
    }

    pub fn from_flat(x: &[f64], n_bus: usize, n_gen: usize) -> Result<Self> {
        if x.len() != 2 * n_bus + 2 * n_gen {
            return Err(Error::Dimension(format!(
                "flat vector has length {}, expected {}",
                x.len(),
                2 * n_bus + 2 * n_gen
            )));
        }
        let (va, rest) = x.split_at(n_bus);
        let (vm, rest) = rest.split_at(n_bus);
        let (pg, qg) = rest.split_at(n_gen);
        Ok(Self { va: va.to_vec(), vm: vm.to_vec(), pg: pg.to_vec(), qg: qg.to_vec() })
    }
}

/// Variable bounds over the flat vector. The reference angle is pinned.
#[derive(Debug, Clone, PartialEq, Serialize, Deserialize)]
pub struct BoundsSpec {
    pub x_min: Vec<f64>,
    pub x_max: Vec<f64>,
}

/// One linear inequality row generated from a finite variable bound:
/// `x[var] − limit ≤ 0` for an upper bound, `limit − x[var] ≤ 0` for a lower.
#[derive(Debug, Clone, Copy, PartialEq)]
pub struct BoundRow {
    pub var: usize,
    pub upper: bool,
    pub limit: f64,
}

/// A rated branch contributing two flow rows.
#[derive(Debug, Clone, Copy, PartialEq)]
pub struct RatedBranch {
    /// Index into `Network::branches`.
    pub adm: usize,
    /// Squared rating in p.u.
    pub limit_sq: f64,
}

/// Per-unit model of a validated case, ready for evaluation.
#[derive(Debug, Clone)]
pub struct Network {
    pub case: GridCase,
    pub dims: Dimensions,
    pub base_mva: f64,
    pub ref_bus: usize,
    /// Reference angle, radians.
    pub va_ref: f64,
    /// Active/reactive loads, p.u.
    pub pd: Vec<f64>,
    pub qd: Vec<f64>,
    pub ybus: SparseComplexMatrix,
    pub yf: SparseComplexMatrix,
    pub yt: SparseComplexMatrix,
    pub branches: Vec<BranchAdmittance>,
    pub rated: Vec<RatedBranch>,
    /// Bus index of each in-service generator.
    pub gen_bus: Vec<usize>,
    /// Case index of each in-service generator.
    pub gen_index: Vec<usize>,
    pub cost: Vec<Vec<f64>>,
    /// `n_bus × n_gen` connection matrix over in-service generators.
    pub cg: SparseMatrix,
    pub bounds: BoundsSpec,
    pub bound_rows: Vec<BoundRow>,
}

impl Network {
    pub fn new(case: &GridCase) -> Result<Self> {
        case.validate()?;
        let dims = case.dimensions();
        let base = case.base_mva;
        let n = dims.n_bus;
        let index = case.bus_index();
        let ref_bus = case.ref_bus();
        let va_ref = case.buses[ref_bus].va0.to_radians();
        let (ybus, yf, yt) = build_ybus(case);
        let branches = branch_admittances(case);
        let rated = branches
            .iter()
            .enumerate()
            .filter_map(|(i, a)| {
                let rate = case.branches[a.branch].rate_a;
                (rate > 0.0).then(|| RatedBranch { adm: i, limit_sq: (rate / base).powi(2) })
            })
            .collect();
        let mut gen_bus = Vec::new();
        let mut gen_index = Vec::new();
        let mut cost = Vec::new();
        for (g, gen) in case.in_service_gens() {
            gen_bus.push(index[&gen.bus]);
            gen_index.push(g);
            cost.push(gen.cost.clone());
        }
        let ng = gen_bus.len();
        let mut cg = SparseMatrix::new(n, ng);
        for (g, &b) in gen_bus.iter().enumerate() {
            cg.push(b, g, 1.0);
        }

        let mut x_min = vec![f64::NEG_INFINITY; dims.n_x];
        let mut x_max = vec![f64::INFINITY; dims.n_x];
        x_min[ref_bus] = va_ref;
        x_max[ref_bus] = va_ref;
        for (i, b) in case.buses.iter().enumerate() {
            x_min[n + i] = b.vm_min;
            x_max[n + i] = b.vm_max;
        }
        for (j, &g) in gen_index.iter().enumerate() {
            let gen = &case.gens[g];
            x_min[2 * n + j] = gen.pmin / base;
            x_max[2 * n + j] = gen.pmax / base;
            x_min[2 * n + ng + j] = gen.qmin / base;
            x_max[2 * n + ng + j] = gen.qmax / base;
        }
        let mut bound_rows = Vec::new();
        for upper in [true, false] {
            for var in 0..dims.n_x {
                if var == ref_bus {
                    continue;
                }
                let limit = if upper { x_max[var] } else { x_min[var] };
                if limit.is_finite() {
                    bound_rows.push(BoundRow { var, upper, limit });
                }
            }
        }

        let net = Self {
            case: case.clone(),
            dims,
            base_mva: base,
            ref_bus,
            va_ref,
            pd: case.buses.iter().map(|b| b.pd / base).collect(),
            qd: case.buses.iter().map(|b| b.qd / base).collect(),
            ybus,
            yf,
            yt,
            branches,
            rated,
            gen_bus,
            gen_index,
            cost,
            cg,
            bounds: BoundsSpec { x_min, x_max },
            bound_rows,
        };
        debug_assert_eq!(net.n_flow() + net.bound_rows.len(), dims.n_ineq);
        Ok(net)
    }

    /// Copy of this network with the bus loads replaced (MW / MVAr).
    pub fn with_loads(&self, pd_mw: &[f64], qd_mw: &[f64]) -> Result<Self> {
        let n = self.dims.n_bus;
        if pd_mw.len() != n || qd_mw.len() != n {
            return Err(Error::Dimension(format!("load vectors must have length {n}")));
        }
        let mut net = self.clone();
        net.pd = pd_mw.iter().map(|p| p / self.base_mva).collect();
        net.qd = qd_mw.iter().map(|q| q / self.base_mva).collect();
        for (bus, (&p, &q)) in net.case.buses.iter_mut().zip(pd_mw.iter().zip(qd_mw)) {
            bus.pd = p;
            bus.qd = q;
        }
        Ok(net)
    }

    pub fn n_bus(&self) -> usize {
        self.dims.n_bus
    }

    pub fn n_gen(&self) -> usize {
        self.gen_bus.len()
    }

    /// Number of branch-flow inequality rows.
    pub fn n_flow(&self) -> usize {
        2 * self.rated.len()
    }

    pub fn va<'a>(&self, x: &'a [f64]) -> &'a [f64] {
        &x[..self.n_bus()]
    }

    pub fn vm<'a>(&self, x: &'a [f64]) -> &'a [f64] {
        &x[self.n_bus()..2 * self.n_bus()]
    }

    pub fn pg<'a>(&self, x: &'a [f64]) -> &'a [f64] {
        let n = self.n_bus();
        &x[2 * n..2 * n + self.n_gen()]
    }

    pub fn qg<'a>(&self, x: &'a [f64]) -> &'a [f64] {
        let n = self.n_bus();
        &x[2 * n + self.n_gen()..]
    }

    /// Complex bus voltages.
    pub fn voltages(&self, x: &[f64]) -> Vec<Complex64> {
        self.va(x)
            .iter()
            .zip(self.vm(x))
            .map(|(&a, &m)| Complex64::from_polar(m, a))
            .collect()
    }

    /// Column offsets of the `va`, `vm`, `pg`, `qg` blocks.
    pub fn offsets(&self) -> [usize; 4] {
        let n = self.n_bus();
        let ng = self.n_gen();
        [0, n, 2 * n, 2 * n + ng]
    }
}

#[cfg(test)]
mod tests {
    use super::*;
    use crate::case::fixtures::two_bus;

    #[test]
    fn flatten_order_is_canonical() {
        let v = OpfVector { va: vec![1.0, 2.0], vm: vec![3.0, 4.0], pg: vec![5.0], qg: vec![6.0] };
        let flat = v.flatten();
        assert_eq!(flat, vec![1.0, 2.0, 3.0, 4.0, 5.0, 6.0]);
        assert_eq!(OpfVector::from_flat(&flat, 2, 1).unwrap(), v);
        assert!(OpfVector::from_flat(&flat, 2, 2).is_err());
    }

    #[test]
    fn network_bounds() {
        let net = Network::new(&two_bus()).unwrap();
        assert_eq!(net.bounds.x_min[0], 0.0);
        assert_eq!(net.bounds.x_max[0], 0.0);
        assert_eq!(net.bounds.x_max[4], 2.0);
        assert_eq!(net.bound_rows.len(), 8);
        assert_eq!(net.dims.n_ineq, 10);
    }
}
