//! Power-grid case data: buses, generators, branches and derived matrices.

mod admittance;
mod json;
mod matpower;

pub use admittance::{build_cg, build_ybus, branch_admittances, BranchAdmittance};
pub use json::{parse_case_json, to_case_json};
pub use matpower::import_matpower_m;

use std::collections::HashMap;

use serde::{Deserialize, Serialize};

use crate::error::{Error, Result};

#[derive(Debug, Clone, Copy, PartialEq, Eq, Serialize, Deserialize)]
#[serde(rename_all = "lowercase")]
pub enum BusKind {
    Pq,
    Pv,
    Ref,
}

#[derive(Debug, Clone, PartialEq, Serialize, Deserialize)]
pub struct Bus {
    pub id: i64,
    pub kind: BusKind,
    /// Active load, MW.
    pub pd: f64,
    /// Reactive load, MVAr.
    pub qd: f64,
    /// Shunt conductance, MW demanded at 1 p.u. voltage.
    pub gs: f64,
    /// Shunt susceptance, MVAr injected at 1 p.u. voltage.
    pub bs: f64,
    pub vm_min: f64,
    pub vm_max: f64,
    pub vm0: f64,
    /// Degrees.
    pub va0: f64,
}

#[derive(Debug, Clone, PartialEq, Serialize, Deserialize)]
pub struct Generator {
    pub bus: i64,
    pub pmin: f64,
    pub pmax: f64,
    pub qmin: f64,
    pub qmax: f64,
    pub pg0: f64,
    pub qg0: f64,
    pub status: bool,
    /// Polynomial cost coefficients, highest degree first, in $/hr of MW.
    pub cost: Vec<f64>,
}

#[derive(Debug, Clone, PartialEq, Serialize, Deserialize)]
pub struct Branch {
    pub from: i64,
    pub to: i64,
    pub r: f64,
    pub x: f64,
    pub b: f64,
    /// Off-nominal turns ratio; 0 means 1.0.
    pub tap: f64,
    /// Degrees.
    pub shift: f64,
    /// MVA; 0 means unlimited.
    pub rate_a: f64,
    pub status: bool,
}

#[derive(Debug, Clone, PartialEq, Serialize, Deserialize)]
pub struct GridCase {
    pub base_mva: f64,
    pub buses: Vec<Bus>,
    pub gens: Vec<Generator>,
    pub branches: Vec<Branch>,
}

/// Problem sizes for the OPF formulation.
#[derive(Debug, Clone, Copy, PartialEq, Eq, Serialize, Deserialize)]
pub struct Dimensions {
    pub n_bus: usize,
    pub n_gen: usize,
    pub n_branch: usize,
    pub n_x: usize,
    pub n_eq: usize,
    pub n_ineq: usize,
}

impl GridCase {
    /// Checks every structural invariant of the case.
    pub fn validate(&self) -> Result<()> {
        if !(self.base_mva > 0.0) || !self.base_mva.is_finite() {
            return Err(Error::Invalid(format!("base_mva must be positive, got {}", self.base_mva)));
        }
        if self.buses.is_empty() {
            return Err(Error::Invalid("case has no buses".into()));
        }
        let mut seen = HashMap::new();
        for (i, bus) in self.buses.iter().enumerate() {
            if seen.insert(bus.id, i).is_some() {
                return Err(Error::Invalid(format!("duplicate bus id {}", bus.id)));
            }
            if !(bus.vm_min > 0.0) {
                return Err(Error::Invalid(format!("bus {}: vm_min must be positive", bus.id)));
            }
            if bus.vm_min > bus.vm_max {
                return Err(Error::Invalid(format!("bus {}: vm_min > vm_max", bus.id)));
            }
        }
        let n_ref = self.buses.iter().filter(|b| b.kind == BusKind::Ref).count();
        if n_ref != 1 {
            return Err(Error::Invalid(format!("expected exactly one reference bus, found {n_ref}")));
        }
        for (g, gen) in self.gens.iter().enumerate() {
            if !seen.contains_key(&gen.bus) {
                return Err(Error::Invalid(format!("generator {g} references unknown bus {}", gen.bus)));
            }
            if gen.pmin > gen.pmax {
                return Err(Error::Invalid(format!("generator {g}: pmin > pmax")));
            }
            if gen.qmin > gen.qmax {
                return Err(Error::Invalid(format!("generator {g}: qmin > qmax")));
            }
            if gen.cost.is_empty() {
                return Err(Error::Invalid(format!("generator {g}: empty cost polynomial")));
            }
        }
        for (k, br) in self.branches.iter().enumerate() {
            for end in [br.from, br.to] {
                if !seen.contains_key(&end) {
                    return Err(Error::Invalid(format!("branch {k} references unknown bus {end}")));
                }
            }
            if br.from == br.to {
                return Err(Error::Invalid(format!("branch {k} connects bus {} to itself", br.from)));
            }
            if br.status && br.x == 0.0 && br.r == 0.0 {
                return Err(Error::Invalid(format!("branch {k} has zero series impedance")));
            }
        }
        Ok(())
    }

    /// Map from external bus id to internal index.
    pub fn bus_index(&self) -> HashMap<i64, usize> {
        self.buses.iter().enumerate().map(|(i, b)| (b.id, i)).collect()
    }

    pub fn ref_bus(&self) -> usize {
        self.buses
            .iter()
            .position(|b| b.kind == BusKind::Ref)
            .expect("validated case has a reference bus")
    }

    pub fn in_service_gens(&self) -> impl Iterator<Item = (usize, &Generator)> {
        self.gens.iter().enumerate().filter(|(_, g)| g.status)
    }

    /// Problem dimensions. Inequalities count two flow rows per in-service
    /// branch with a positive rating plus one row per finite variable bound,
    /// excluding the reference angle (an equality row).
    pub fn dimensions(&self) -> Dimensions {
        let n_bus = self.buses.len();
        let n_gen = self.gens.iter().filter(|g| g.status).count();
        let n_rated = self.branches.iter().filter(|b| b.status && b.rate_a > 0.0).count();
        let mut n_bounds = 0;
        for b in &self.buses {
            n_bounds += b.vm_min.is_finite() as usize + b.vm_max.is_finite() as usize;
        }
        for (_, g) in self.in_service_gens() {
            n_bounds += [g.pmin, g.pmax, g.qmin, g.qmax].iter().filter(|v| v.is_finite()).count();
        }
        Dimensions {
            n_bus,
            n_gen,
            n_branch: self.branches.len(),
            n_x: 2 * n_bus + 2 * n_gen,
            n_eq: 2 * n_bus + 1,
            n_ineq: 2 * n_rated + n_bounds,
        }
    }
}

#[cfg(test)]
pub(crate) mod fixtures {
    use super::*;

    /// Two buses, one lossless line of reactance 0.1, one generator at the
    /// reference bus.
    pub fn two_bus() -> GridCase {
        GridCase {
            base_mva: 100.0,
            buses: vec![
                Bus { id: 1, kind: BusKind::Ref, pd: 0.0, qd: 0.0, gs: 0.0, bs: 0.0, vm_min: 0.9, vm_max: 1.1, vm0: 1.0, va0: 0.0 },
                Bus { id: 2, kind: BusKind::Pq, pd: 50.0, qd: 10.0, gs: 0.0, bs: 0.0, vm_min: 0.9, vm_max: 1.1, vm0: 1.0, va0: 0.0 },
            ],
            gens: vec![Generator {
                bus: 1, pmin: 0.0, pmax: 200.0, qmin: -100.0, qmax: 100.0, pg0: 50.0, qg0: 0.0,
                status: true, cost: vec![0.1, 20.0, 100.0],
            }],
            branches: vec![Branch {
                from: 1, to: 2, r: 0.0, x: 0.1, b: 0.0, tap: 0.0, shift: 0.0, rate_a: 100.0, status: true,
            }],
        }
    }
}

#[cfg(test)]
mod tests {
    use super::fixtures::two_bus;
    use super::*;

    #[test]
    fn two_bus_is_valid() {
        let case = two_bus();
        case.validate().unwrap();
        let d = case.dimensions();
        assert_eq!(d.n_bus, 2);
        assert_eq!(d.n_eq, 5);
        assert_eq!(d.n_x, 6);
    }

    #[test]
    fn two_reference_buses_rejected() {
        let mut case = two_bus();
        case.buses[1].kind = BusKind::Ref;
        assert!(matches!(case.validate(), Err(Error::Invalid(_))));
    }

    #[test]
    fn dangling_generator_rejected() {
        let mut case = two_bus();
        case.gens[0].bus = 7;
        assert!(case.validate().is_err());
    }

    #[test]
    fn only_flow_rows_when_bounds_infinite() {
        let mut case = two_bus();
        for b in &mut case.buses {
            b.vm_min = f64::MIN_POSITIVE;
            b.vm_max = f64::INFINITY;
        }
        // vm_min must stay positive, so its two rows remain.
        let g = &mut case.gens[0];
        g.pmin = f64::NEG_INFINITY;
        g.pmax = f64::INFINITY;
        g.qmin = f64::NEG_INFINITY;
        g.qmax = f64::INFINITY;
        let d = case.dimensions();
        assert_eq!(d.n_ineq, 2 + 2);
    }
}
