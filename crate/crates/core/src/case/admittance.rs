use num_complex::Complex64;

use super::GridCase;
use crate::sparse::{SparseComplexMatrix, SparseMatrix};

/// Two-port π-model admittances of one in-service branch, in per-unit.
#[derive(Debug, Clone, Copy, PartialEq)]
pub struct BranchAdmittance {
    /// Index into `GridCase::branches`.
    pub branch: usize,
    pub from: usize,
    pub to: usize,
    pub yff: Complex64,
    pub yft: Complex64,
    pub ytf: Complex64,
    pub ytt: Complex64,
}

/// Admittances of all in-service branches, in case order.
pub fn branch_admittances(case: &GridCase) -> Vec<BranchAdmittance> {
    let index = case.bus_index();
    case.branches
        .iter()
        .enumerate()
        .filter(|(_, br)| br.status)
        .map(|(k, br)| {
            let ys = Complex64::new(1.0, 0.0) / Complex64::new(br.r, br.x);
            let charging = Complex64::new(0.0, br.b / 2.0);
            let ratio = if br.tap == 0.0 { 1.0 } else { br.tap };
            let tap = Complex64::from_polar(ratio, br.shift.to_radians());
            BranchAdmittance {
                branch: k,
                from: index[&br.from],
                to: index[&br.to],
                yff: (ys + charging) / (ratio * ratio),
                yft: -ys / tap.conj(),
                ytf: -ys / tap,
                ytt: ys + charging,
            }
        })
        .collect()
}

/// Bus admittance matrix plus the from/to-end branch admittance matrices.
///
/// `yf` and `yt` are `n_branch × n_bus`; rows of out-of-service branches stay
/// empty.
pub fn build_ybus(case: &GridCase) -> (SparseComplexMatrix, SparseComplexMatrix, SparseComplexMatrix) {
    let n_bus = case.buses.len();
    let n_branch = case.branches.len();
    let mut ybus = SparseComplexMatrix::new(n_bus, n_bus);
    let mut yf = SparseComplexMatrix::new(n_branch, n_bus);
    let mut yt = SparseComplexMatrix::new(n_branch, n_bus);
    for a in branch_admittances(case) {
        ybus.push(a.from, a.from, a.yff);
        ybus.push(a.from, a.to, a.yft);
        ybus.push(a.to, a.from, a.ytf);
        ybus.push(a.to, a.to, a.ytt);
        yf.push(a.branch, a.from, a.yff);
        yf.push(a.branch, a.to, a.yft);
        yt.push(a.branch, a.from, a.ytf);
        yt.push(a.branch, a.to, a.ytt);
    }
    for (i, bus) in case.buses.iter().enumerate() {
        if bus.gs != 0.0 || bus.bs != 0.0 {
            ybus.push(i, i, Complex64::new(bus.gs, bus.bs) / case.base_mva);
        }
    }
    ybus.compress();
    yf.compress();
    yt.compress();
    (ybus, yf, yt)
}

/// Generator connection matrix, `n_bus × n_gen` over all generators; columns of
/// out-of-service units are zero.
pub fn build_cg(case: &GridCase) -> SparseMatrix {
    let index = case.bus_index();
    let mut cg = SparseMatrix::new(case.buses.len(), case.gens.len());
    for (g, gen) in case.in_service_gens() {
        cg.push(index[&gen.bus], g, 1.0);
    }
    cg
}

#[cfg(test)]
mod tests {
    use super::*;
    use crate::case::fixtures::two_bus;

    fn c(re: f64, im: f64) -> Complex64 {
        Complex64::new(re, im)
    }

    #[test]
    fn two_bus_line() {
        let (ybus, yf, yt) = build_ybus(&two_bus());
        let d = ybus.to_dense();
        let expect = [[c(0.0, -10.0), c(0.0, 10.0)], [c(0.0, 10.0), c(0.0, -10.0)]];
        for i in 0..2 {
            for j in 0..2 {
                assert!((d[i][j] - expect[i][j]).norm() < 1e-12);
            }
        }
        assert_eq!(yf.n_rows, 1);
        assert!((yt.get(0, 1) - c(0.0, -10.0)).norm() < 1e-12);
    }

    #[test]
    fn shunt_only_case() {
        let mut case = two_bus();
        case.branches[0].status = false;
        case.buses[1].gs = 5.0;
        case.buses[1].bs = -20.0;
        let (ybus, yf, _) = build_ybus(&case);
        assert_eq!(ybus.get(0, 0), c(0.0, 0.0));
        assert!((ybus.get(1, 1) - c(0.05, -0.2)).norm() < 1e-15);
        assert!(yf.entries.is_empty());
    }

    #[test]
    fn cg_columns() {
        let mut case = two_bus();
        assert_eq!(build_cg(&case).to_dense(), vec![vec![1.0], vec![0.0]]);
        case.gens[0].status = false;
        assert_eq!(build_cg(&case).to_dense(), vec![vec![0.0], vec![0.0]]);
    }

    #[test]
    fn rows_sum_to_shunt_without_charging() {
        let mut case = two_bus();
        case.branches[0].r = 0.02;
        case.buses[0].bs = 3.0;
        let (ybus, _, _) = build_ybus(&case);
        let d = ybus.to_dense();
        let row0: Complex64 = d[0].iter().sum();
        let row1: Complex64 = d[1].iter().sum();
        assert!((row0 - c(0.0, 0.03)).norm() < 1e-12);
        assert!(row1.norm() < 1e-12);
    }
}
