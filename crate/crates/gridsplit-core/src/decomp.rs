//! Two-stage decomposition of the network solve.
//!
//! Stage 1 splits the grid into subsystems along cut branches. Each side of
//! a cut gains a fictitious boundary bus carrying a conductance `G`, a
//! relaxed voltage `V_d`, an injection `S`, and a port current `I`. The
//! subsystems are solved independently; a Jacobi exchange then reconciles
//! the boundary values until the two port currents of every cut cancel.
//!
//! Stage 2 solves a subsystem that is itself split into subdomains through
//! the Schur complement of its interface buses, so the interior blocks are
//! factored once and reused.

use alloc::collections::BTreeMap;
use alloc::format;
use alloc::vec;
use alloc::vec::Vec;
use num_complex::Complex64;
use num_traits::Zero;

use crate::error::{Error, Result};
use crate::linalg::{CMatrix, LuFactor};
use crate::net::{AdmittanceMatrix, PowerFlowCase};

/// Bus-to-subsystem and bus-to-subdomain assignment derived from cut lists.
#[derive(Debug, Clone, PartialEq)]
pub struct PartitionPlan {
    /// Bus id -> subsystem index.
    pub subsystem_of: Vec<usize>,
    /// Stage-1 cut branch indices.
    pub cut_branches: Vec<usize>,
    /// Bus id -> subdomain index within its subsystem.
    pub subdomain_of: Vec<usize>,
    /// Stage-2 cut branch indices.
    pub subdomain_cut_branches: Vec<usize>,
    pub n_subsystems: usize,
    /// Number of subdomains per subsystem.
    pub n_subdomains: Vec<usize>,
    /// Workload balance: interior-bus count spread (max - min) across subsystems.
    pub balance_spread: usize,
}

fn components(n: usize, edges: &[(usize, usize)]) -> Vec<usize> {
    let mut adj: Vec<Vec<usize>> = vec![Vec::new(); n];
    for &(a, b) in edges {
        adj[a].push(b);
        adj[b].push(a);
    }
    let mut comp = vec![usize::MAX; n];
    let mut next = 0;
    for start in 0..n {
        if comp[start] != usize::MAX {
            continue;
        }
        // component labels follow ascending smallest-member order
        let label = next;
        next += 1;
        let mut stack = vec![start];
        comp[start] = label;
        while let Some(u) = stack.pop() {
            for &v in &adj[u] {
                if comp[v] == usize::MAX {
                    comp[v] = label;
                    stack.push(v);
                }
            }
        }
    }
    comp
}

fn resolve_cut(case: &PowerFlowCase, from: usize, to: usize) -> Result<usize> {
    match case.branch_between(from, to) {
        Some(i) if case.branches[i].in_service => Ok(i),
        Some(_) => Err(Error::InvalidCut { from: from + 1, to: to + 1, reason: "branch is out of service".into() }),
        None => Err(Error::InvalidCut { from: from + 1, to: to + 1, reason: "no such branch".into() }),
    }
}

/// Build and validate a partition from stage-1 and stage-2 cut lists given
/// as (from, to) bus pairs.
pub fn make_partition(
    case: &PowerFlowCase,
    subsystem_cuts: &[(usize, usize)],
    subdomain_cuts: &[(usize, usize)],
) -> Result<PartitionPlan> {
    let n = case.n_buses();
    let cut_branches: Vec<usize> = subsystem_cuts
        .iter()
        .map(|&(a, b)| resolve_cut(case, a, b))
        .collect::<Result<_>>()?;
    let subdomain_cut_branches: Vec<usize> = subdomain_cuts
        .iter()
        .map(|&(a, b)| resolve_cut(case, a, b))
        .collect::<Result<_>>()?;

    let stage1_edges: Vec<(usize, usize)> = case
        .branches
        .iter()
        .enumerate()
        .filter(|(i, b)| b.in_service && !cut_branches.contains(i))
        .map(|(_, b)| (b.from, b.to))
        .collect();
    let subsystem_of = components(n, &stage1_edges);
    let n_subsystems = subsystem_of.iter().max().map_or(0, |m| m + 1);

    for &bi in &cut_branches {
        let b = &case.branches[bi];
        if subsystem_of[b.from] == subsystem_of[b.to] {
            return Err(Error::Partition(format!(
                "cut {}-{} does not separate: both ends stay in subsystem {}",
                b.from + 1,
                b.to + 1,
                subsystem_of[b.from] + 1
            )));
        }
    }
    for &bi in &subdomain_cut_branches {
        let b = &case.branches[bi];
        if subsystem_of[b.from] != subsystem_of[b.to] {
            return Err(Error::Partition(format!(
                "subdomain cut {}-{} crosses subsystems",
                b.from + 1,
                b.to + 1
            )));
        }
    }

    let stage2_edges: Vec<(usize, usize)> = case
        .branches
        .iter()
        .enumerate()
        .filter(|(i, b)| {
            b.in_service && !cut_branches.contains(i) && !subdomain_cut_branches.contains(i)
        })
        .map(|(_, b)| (b.from, b.to))
        .collect();
    // components are computed globally, then renumbered within each subsystem
    let raw = components(n, &stage2_edges);
    let mut subdomain_of = vec![0usize; n];
    let mut n_subdomains = vec![0usize; n_subsystems];
    for s in 0..n_subsystems {
        let mut map: BTreeMap<usize, usize> = BTreeMap::new();
        for bus in 0..n {
            if subsystem_of[bus] == s {
                let next = map.len();
                let d = *map.entry(raw[bus]).or_insert(next);
                subdomain_of[bus] = d;
            }
        }
        n_subdomains[s] = map.len();
    }
    for &bi in &subdomain_cut_branches {
        let b = &case.branches[bi];
        if subdomain_of[b.from] == subdomain_of[b.to] {
            return Err(Error::Partition(format!(
                "subdomain cut {}-{} does not separate its subsystem",
                b.from + 1,
                b.to + 1
            )));
        }
    }

    let mut sizes = vec![0usize; n_subsystems];
    for bus in 0..n {
        sizes[subsystem_of[bus]] += 1;
    }
    let balance_spread = sizes.iter().max().unwrap_or(&0) - sizes.iter().min().unwrap_or(&0);

    Ok(PartitionPlan {
        subsystem_of,
        cut_branches,
        subdomain_of,
        subdomain_cut_branches,
        n_subsystems,
        n_subdomains,
        balance_spread,
    })
}

/// One side of a cut edge: the fictitious boundary bus state.
#[derive(Debug, Clone, Copy, PartialEq)]
pub struct BoundaryPort {
    pub subsystem: usize,
    /// Interior bus this port couples to (global id).
    pub local_bus: usize,
    /// Series admittance of the cut branch.
    pub cut_y: Complex64,
    /// Boundary conductance terminating the cut.
    pub g: Complex64,
    /// Boundary-bus voltage.
    pub v_d: Complex64,
    /// Boundary injection.
    pub s: Complex64,
    /// Port current, oriented into the subsystem: I = cut_y (V_d - V_local).
    pub i: Complex64,
    /// Latest solved voltage of `local_bus`, exchanged with the peer.
    pub v_local: Complex64,
    /// Index of the matching port on the other side of the cut.
    pub peer: usize,
    /// Cut branch index in the case.
    pub branch: usize,
}

/// Create the port pair list for a plan: ports 2k and 2k+1 belong to cut k.
pub fn make_ports(case: &PowerFlowCase, plan: &PartitionPlan) -> Result<Vec<BoundaryPort>> {
    let mut ports = Vec::with_capacity(plan.cut_branches.len() * 2);
    for (k, &bi) in plan.cut_branches.iter().enumerate() {
        let br = &case.branches[bi];
        let y = br.series_y();
        if y.norm() < 1e-300 {
            return Err(Error::ZeroCutAdmittance { from: br.from + 1, to: br.to + 1 });
        }
        for (side, bus) in [(0usize, br.from), (1usize, br.to)] {
            ports.push(BoundaryPort {
                subsystem: plan.subsystem_of[bus],
                local_bus: bus,
                cut_y: y,
                g: y,
                v_d: Complex64::zero(),
                s: Complex64::zero(),
                i: Complex64::zero(),
                v_local: Complex64::zero(),
                peer: 2 * k + (side ^ 1),
                branch: bi,
            });
        }
    }
    Ok(ports)
}

/// Jacobi exchange across all cuts: every port simultaneously takes its
/// peer's last solved values, V_d <- V_peer, I <- -I_peer, and refreshes its
/// injection S <- G V_peer - I_peer.
pub fn relax_boundary(ports: &mut [BoundaryPort]) {
    let snapshot: Vec<(Complex64, Complex64)> =
        ports.iter().map(|p| (p.v_local, p.i)).collect();
    for idx in 0..ports.len() {
        let (v_peer, i_peer) = snapshot[ports[idx].peer];
        let p = &mut ports[idx];
        p.v_d = v_peer;
        p.i = -i_peer;
        p.s = p.g * v_peer - i_peer;
    }
}

/// Port-current convergence test: converged when every cut's two currents
/// cancel to within `sigma`. Returns the verdict and per-port mismatches.
pub fn check_convergence(ports: &[BoundaryPort], sigma: f64) -> (bool, Vec<f64>) {
    debug_assert!(sigma >= 0.0);
    let mismatches: Vec<f64> = ports
        .iter()
        .map(|p| (p.i + ports[p.peer].i).norm())
        .collect();
    let worst = mismatches.iter().cloned().fold(0.0, f64::max);
    (worst <= sigma, mismatches)
}

/// A subsystem's admittance matrix augmented with one boundary bus per port.
#[derive(Debug, Clone)]
pub struct AugmentedSubsystem {
    pub subsystem: usize,
    /// Global bus ids of the interior rows, ascending.
    pub buses: Vec<usize>,
    /// Global bus id -> local row.
    pub local_of: BTreeMap<usize, usize>,
    /// (port index, matrix row) for each boundary bus, in port order.
    pub port_rows: Vec<(usize, usize)>,
    pub y_mod: AdmittanceMatrix,
}

/// Build the augmented matrix for subsystem `sub`: the interior block is the
/// restriction of the global matrix (each interior diagonal keeps the cut's
/// series term, which now couples to the boundary bus), and every port adds
/// a boundary row with G + cut_y on the diagonal and -cut_y coupling.
pub fn build_augmented(
    y_global: &AdmittanceMatrix,
    plan: &PartitionPlan,
    ports: &[BoundaryPort],
    sub: usize,
) -> Result<AugmentedSubsystem> {
    let buses: Vec<usize> = (0..plan.subsystem_of.len())
        .filter(|&b| plan.subsystem_of[b] == sub)
        .collect();
    let local_of: BTreeMap<usize, usize> =
        buses.iter().enumerate().map(|(i, &b)| (b, i)).collect();
    let my_ports: Vec<usize> = ports
        .iter()
        .enumerate()
        .filter(|(_, p)| p.subsystem == sub)
        .map(|(i, _)| i)
        .collect();
    let n_int = buses.len();
    let dim = n_int + my_ports.len();
    let mut y_mod = AdmittanceMatrix::new(dim);
    for (i, j, y) in y_global.iter() {
        if let (Some(&li), Some(&lj)) = (local_of.get(&i), local_of.get(&j)) {
            y_mod.add(li, lj, y);
        }
    }
    let mut port_rows = Vec::with_capacity(my_ports.len());
    for (slot, &pi) in my_ports.iter().enumerate() {
        let p = &ports[pi];
        if p.cut_y.norm() < 1e-300 {
            return Err(Error::Partition(format!(
                "port on bus {} (cut branch {}) has zero cut admittance",
                p.local_bus + 1,
                p.branch + 1
            )));
        }
        let row = n_int + slot;
        let lj = *local_of
            .get(&p.local_bus)
            .ok_or_else(|| Error::Partition(format!("port bus {} outside subsystem {}", p.local_bus + 1, sub)))?;
        y_mod.add(row, row, p.g + p.cut_y);
        y_mod.add(row, lj, -p.cut_y);
        y_mod.add(lj, row, -p.cut_y);
        port_rows.push((pi, row));
    }
    Ok(AugmentedSubsystem { subsystem: sub, buses, local_of, port_rows, y_mod })
}

/// Thevenin admittance of a subsystem seen from bus `bus`, with all stage-1
/// cut branches removed. Used as the default boundary conductance for the
/// opposite side of a cut: terminating the boundary bus with the far side's
/// Norton admittance is what lets the exchange settle in a couple of
/// iterations. `cut_series` carries the effective series admittance of each
/// cut branch, aligned with `plan.cut_branches` (line changes can retune a
/// cut mid-run).
pub fn thevenin_admittance(
    y_global: &AdmittanceMatrix,
    case: &PowerFlowCase,
    plan: &PartitionPlan,
    cut_series: &[Complex64],
    sub: usize,
    bus: usize,
) -> Result<Complex64> {
    debug_assert_eq!(cut_series.len(), plan.cut_branches.len());
    let buses: Vec<usize> = (0..plan.subsystem_of.len())
        .filter(|&b| plan.subsystem_of[b] == sub)
        .collect();
    let local_of: BTreeMap<usize, usize> =
        buses.iter().enumerate().map(|(i, &b)| (b, i)).collect();
    let n = buses.len();
    let mut m = CMatrix::zeros(n, n);
    for (i, j, y) in y_global.iter() {
        if let (Some(&li), Some(&lj)) = (local_of.get(&i), local_of.get(&j)) {
            m[(li, lj)] = y;
        }
    }
    // remove the cut branches' series terms left on interior diagonals
    for (&bi, &ys) in plan.cut_branches.iter().zip(cut_series) {
        let br = &case.branches[bi];
        for end in [br.from, br.to] {
            if let Some(&li) = local_of.get(&end) {
                m[(li, li)] -= ys;
            }
        }
    }
    let k = *local_of
        .get(&bus)
        .ok_or_else(|| Error::Partition(format!("bus {} not in subsystem {}", bus + 1, sub)))?;
    match LuFactor::new(&m) {
        Ok(lu) => {
            let mut e = vec![Complex64::zero(); n];
            e[k] = Complex64::new(1.0, 0.0);
            let z = lu.solve(&e);
            Ok(Complex64::new(1.0, 0.0) / z[k])
        }
        // a floating subsystem (no shunt path) is a pure current source
        // behind the cut: zero Norton admittance
        Err(Error::SingularMatrix { .. }) => Ok(Complex64::zero()),
        Err(e) => Err(e),
    }
}

/// Factored Schur-complement blocks of one subsystem matrix.
///
/// The local rows split into per-subdomain interiors and the shared
/// interface; the reduced interface operator D4 - sum_i C_i S_i^{-1} B_i is
/// factored once, after which every solve is forward/backward substitution.
/// The per-subdomain back-substitutions are mutually independent.
#[derive(Debug, Clone)]
pub struct SchurBlocks {
    /// Per-subdomain local row indices, ascending.
    pub interior: Vec<Vec<usize>>,
    /// Interface local row indices, ascending.
    pub interface: Vec<usize>,
    s_lu: Vec<LuFactor>,
    b: Vec<CMatrix>,
    w: Vec<CMatrix>,
    c: Vec<CMatrix>,
    reduced_lu: LuFactor,
}

impl SchurBlocks {
    /// Partition the rows of `m`: `subdomain_of_row[r]` assigns interiors;
    /// rows flagged in `is_interface` form the interface block.
    pub fn new(m: &CMatrix, subdomain_of_row: &[usize], is_interface: &[bool]) -> Result<Self> {
        let n = m.n_rows();
        assert_eq!(subdomain_of_row.len(), n);
        assert_eq!(is_interface.len(), n);
        let n_sub = subdomain_of_row
            .iter()
            .zip(is_interface)
            .filter(|(_, &ext)| !ext)
            .map(|(&d, _)| d + 1)
            .max()
            .unwrap_or(0);
        let mut interior: Vec<Vec<usize>> = vec![Vec::new(); n_sub];
        let mut interface = Vec::new();
        for r in 0..n {
            if is_interface[r] {
                interface.push(r);
            } else {
                interior[subdomain_of_row[r]].push(r);
            }
        }
        let take = |rows: &[usize], cols: &[usize]| {
            let mut out = CMatrix::zeros(rows.len(), cols.len());
            for (i, &r) in rows.iter().enumerate() {
                for (j, &c) in cols.iter().enumerate() {
                    out[(i, j)] = m[(r, c)];
                }
            }
            out
        };
        let mut d4 = take(&interface, &interface);
        let mut s_lu = Vec::with_capacity(n_sub);
        let mut b = Vec::with_capacity(n_sub);
        let mut w = Vec::with_capacity(n_sub);
        let mut c = Vec::with_capacity(n_sub);
        for (d, rows) in interior.iter().enumerate() {
            // cross-subdomain interior coupling must be zero for the block
            // elimination to be exact
            for (other, orows) in interior.iter().enumerate() {
                if other == d {
                    continue;
                }
                for &r in rows {
                    for &oc in orows {
                        if !m[(r, oc)].is_zero() {
                            return Err(Error::Partition(format!(
                                "interior rows {r} and {oc} of different subdomains are coupled"
                            )));
                        }
                    }
                }
            }
            let s_i = take(rows, rows);
            let b_i = take(rows, &interface);
            let c_i = take(&interface, rows);
            let lu = LuFactor::new(&s_i).map_err(|e| match e {
                Error::SingularMatrix { pivot } => Error::SingularSubdomain { subdomain: d, pivot },
                other => other,
            })?;
            // W_i = S_i^{-1} B_i, column by column
            let mut w_i = CMatrix::zeros(rows.len(), interface.len());
            for j in 0..interface.len() {
                let col: Vec<Complex64> = (0..rows.len()).map(|i| b_i[(i, j)]).collect();
                let x = lu.solve(&col);
                for i in 0..rows.len() {
                    w_i[(i, j)] = x[i];
                }
            }
            let cw = c_i.mul_mat(&w_i);
            for i in 0..interface.len() {
                for j in 0..interface.len() {
                    let t = cw[(i, j)];
                    d4[(i, j)] -= t;
                }
            }
            s_lu.push(lu);
            b.push(b_i);
            w.push(w_i);
            c.push(c_i);
        }
        let reduced_lu = LuFactor::new(&d4).map_err(|e| match e {
            Error::SingularMatrix { pivot } => Error::SingularInterface { pivot },
            other => other,
        })?;
        Ok(Self { interior, interface, s_lu, b, w, c, reduced_lu })
    }

    pub fn n_subdomains(&self) -> usize {
        self.interior.len()
    }

    /// Interior-to-interface coupling block of subdomain `d`.
    pub fn block_b(&self, d: usize) -> &CMatrix {
        &self.b[d]
    }

    /// Interface-to-interior coupling block of subdomain `d`.
    pub fn block_c(&self, d: usize) -> &CMatrix {
        &self.c[d]
    }

    /// Solve the partitioned system for `rhs` (full local ordering).
    /// Returns per-subdomain interior solutions and the interface solution.
    pub fn solve(&self, rhs: &[Complex64]) -> (Vec<Vec<Complex64>>, Vec<Complex64>) {
        let nf = self.interface.len();
        let mut g: Vec<Complex64> = self.interface.iter().map(|&r| rhs[r]).collect();
        let mut s_inv_f: Vec<Vec<Complex64>> = Vec::with_capacity(self.interior.len());
        for (d, rows) in self.interior.iter().enumerate() {
            let f_i: Vec<Complex64> = rows.iter().map(|&r| rhs[r]).collect();
            let x = self.s_lu[d].solve(&f_i);
            for i in 0..nf {
                let mut acc = Complex64::zero();
                for (j, xv) in x.iter().enumerate() {
                    acc += self.c[d][(i, j)] * xv;
                }
                g[i] -= acc;
            }
            s_inv_f.push(x);
        }
        let v_ext = self.reduced_lu.solve(&g);
        // independent per-subdomain back-substitutions
        let mut v_int = Vec::with_capacity(self.interior.len());
        for (d, base) in s_inv_f.into_iter().enumerate() {
            let rows = self.interior[d].len();
            let mut x = base;
            for i in 0..rows {
                let mut acc = Complex64::zero();
                for (j, ve) in v_ext.iter().enumerate() {
                    acc += self.w[d][(i, j)] * ve;
                }
                x[i] -= acc;
            }
            v_int.push(x);
        }
        (v_int, v_ext)
    }

    /// Solve and reassemble into the full local ordering.
    pub fn solve_full(&self, rhs: &[Complex64]) -> Vec<Complex64> {
        let (v_int, v_ext) = self.solve(rhs);
        let mut out = vec![Complex64::zero(); rhs.len()];
        for (d, rows) in self.interior.iter().enumerate() {
            for (i, &r) in rows.iter().enumerate() {
                out[r] = v_int[d][i];
            }
        }
        for (i, &r) in self.interface.iter().enumerate() {
            out[r] = v_ext[i];
        }
        out
    }
}

/// Convenience wrapper matching the block-system contract: solve with
/// externally supplied mismatch vectors.
pub fn schur_solve(
    blocks: &SchurBlocks,
    rhs: &[Complex64],
) -> Result<(Vec<Vec<Complex64>>, Vec<Complex64>)> {
    let expected: usize =
        blocks.interior.iter().map(Vec::len).sum::<usize>() + blocks.interface.len();
    if rhs.len() != expected {
        return Err(Error::Shape(format!(
            "rhs length {} does not match partitioned dimension {expected}",
            rhs.len()
        )));
    }
    Ok(blocks.solve(rhs))
}

#[cfg(test)]
mod tests {
    use super::*;
    use crate::net::{build_admittance, Branch, Bus, BusKind};

    fn c(re: f64, im: f64) -> Complex64 {
        Complex64::new(re, im)
    }

    fn chain_case(n: usize) -> PowerFlowCase {
        let buses = (0..n)
            .map(|id| Bus {
                id,
                kind: if id == 0 { BusKind::Slack } else { BusKind::Pq },
                base_kv: 230.0,
                shunt: c(0.05, 0.0),
                load: Complex64::zero(),
            })
            .collect();
        let branches = (0..n - 1)
            .map(|i| Branch { from: i, to: i + 1, r: 0.01, x: 0.1, charging: 0.0, in_service: true })
            .collect();
        PowerFlowCase { buses, branches, generators: vec![], base_mva: 100.0, frequency_hz: 60.0 }
    }

    #[test]
    fn empty_cut_lists_are_monolithic() {
        let case = chain_case(4);
        let plan = make_partition(&case, &[], &[]).unwrap();
        assert_eq!(plan.n_subsystems, 1);
        assert_eq!(plan.n_subdomains, vec![1]);
        assert!(plan.subsystem_of.iter().all(|&s| s == 0));
    }

    #[test]
    fn chain_splits_in_two() {
        let case = chain_case(4);
        let plan = make_partition(&case, &[(1, 2)], &[]).unwrap();
        assert_eq!(plan.n_subsystems, 2);
        assert_eq!(plan.subsystem_of, vec![0, 0, 1, 1]);
        assert_eq!(plan.balance_spread, 0);
    }

    #[test]
    fn single_bus_subdomain_accepted() {
        let case = chain_case(3);
        // cutting 0-1 isolates bus 0 as its own subsystem
        let plan = make_partition(&case, &[(0, 1)], &[]).unwrap();
        assert_eq!(plan.n_subsystems, 2);
        assert_eq!(plan.subsystem_of[0], 0);
    }

    #[test]
    fn nonexistent_cut_is_invalid() {
        let case = chain_case(3);
        assert!(matches!(
            make_partition(&case, &[(0, 2)], &[]),
            Err(Error::InvalidCut { .. })
        ));
    }

    #[test]
    fn redundant_cut_does_not_separate() {
        // triangle: cutting one edge leaves the graph connected
        let mut case = chain_case(3);
        case.branches.push(Branch { from: 0, to: 2, r: 0.01, x: 0.1, charging: 0.0, in_service: true });
        assert!(matches!(
            make_partition(&case, &[(0, 1)], &[]),
            Err(Error::Partition(_))
        ));
    }

    #[test]
    fn augmented_boundary_stamps() {
        // one interior bus, one port, cut_y = -10j, G = -10j
        let mut y = AdmittanceMatrix::new(2);
        y.add_shunt(0, c(0.0, -10.0)); // interior diagonal carries the cut series term
        let case = chain_case(2);
        let plan = make_partition(&case, &[(0, 1)], &[]).unwrap();
        let mut ports = make_ports(&case, &plan).unwrap();
        for p in &mut ports {
            p.cut_y = c(0.0, -10.0);
            p.g = c(0.0, -10.0);
        }
        let aug = build_augmented(&y, &plan, &ports, 0).unwrap();
        assert_eq!(aug.y_mod.dimension(), 2);
        assert_eq!(aug.y_mod.get(1, 1), c(0.0, -20.0));
        assert_eq!(aug.y_mod.get(0, 1), c(0.0, 10.0));
        assert_eq!(aug.y_mod.get(1, 0), c(0.0, 10.0));
    }

    #[test]
    fn augmented_without_ports_is_restriction() {
        let case = chain_case(4);
        let y = build_admittance(&case);
        let plan = make_partition(&case, &[], &[]).unwrap();
        let aug = build_augmented(&y, &plan, &[], 0).unwrap();
        assert_eq!(aug.y_mod.dimension(), 4);
        for i in 0..4 {
            for j in 0..4 {
                assert_eq!(aug.y_mod.get(i, j), y.get(i, j));
            }
        }
    }

    #[test]
    fn two_ports_on_same_interior_bus() {
        // star: bus1 center, cut both spokes from subsystem {1,3}'s view
        let mut case = chain_case(3); // 0-1, 1-2
        case.branches.push(Branch { from: 1, to: 3, r: 0.0, x: 0.5, charging: 0.0, in_service: true });
        case.buses.push(Bus { id: 3, kind: BusKind::Pq, base_kv: 230.0, shunt: c(0.05, 0.0), load: Complex64::zero() });
        let y = build_admittance(&case);
        let plan = make_partition(&case, &[(0, 1), (1, 2)], &[]).unwrap();
        let ports = make_ports(&case, &plan).unwrap();
        // subsystem of bus 1 (and 3)
        let sub = plan.subsystem_of[1];
        let aug = build_augmented(&y, &plan, &ports, sub).unwrap();
        assert_eq!(aug.y_mod.dimension(), 2 + 2);
        let lj = aug.local_of[&1];
        for &(_, row) in &aug.port_rows {
            assert!(!aug.y_mod.get(row, lj).is_zero());
        }
    }

    #[test]
    fn reassembly_recovers_global_matrix() {
        let case = chain_case(6);
        let y = build_admittance(&case);
        let plan = make_partition(&case, &[(2, 3)], &[]).unwrap();
        let mut sum = AdmittanceMatrix::new(6);
        for sub in 0..plan.n_subsystems {
            let buses: Vec<usize> = (0..6).filter(|&b| plan.subsystem_of[b] == sub).collect();
            for &i in &buses {
                for &j in &buses {
                    let v = y.get(i, j);
                    if !v.is_zero() {
                        sum.add(i, j, v);
                    }
                }
            }
        }
        for &bi in &plan.cut_branches {
            let br = &case.branches[bi];
            let ys = br.series_y();
            sum.add(br.from, br.to, -ys);
            sum.add(br.to, br.from, -ys);
        }
        for i in 0..6 {
            for j in 0..6 {
                assert!((sum.get(i, j) - y.get(i, j)).norm() < 1e-15);
            }
        }
    }

    #[test]
    fn ports_pair_up_as_an_involution() {
        let case = chain_case(5);
        let plan = make_partition(&case, &[(1, 2), (3, 4)], &[]).unwrap();
        let ports = make_ports(&case, &plan).unwrap();
        assert_eq!(ports.len(), 4);
        for (k, p) in ports.iter().enumerate() {
            assert_eq!(ports[p.peer].peer, k);
            assert_ne!(p.subsystem, ports[p.peer].subsystem);
            assert_eq!(p.cut_y, case.branches[p.branch].series_y());
        }
    }

    #[test]
    fn relax_hand_example() {
        let case = chain_case(2);
        let plan = make_partition(&case, &[(0, 1)], &[]).unwrap();
        let mut ports = make_ports(&case, &plan).unwrap();
        ports[0].g = c(0.0, -10.0);
        // peer's solved values
        ports[1].v_local = c(1.0, 0.0);
        ports[1].i = c(0.2, 0.1);
        relax_boundary(&mut ports);
        assert_eq!(ports[0].v_d, c(1.0, 0.0));
        assert_eq!(ports[0].i, c(-0.2, -0.1));
        assert_eq!(ports[0].s, c(-0.2, -10.1));
    }

    #[test]
    fn relax_fixed_point_when_consistent() {
        let case = chain_case(2);
        let plan = make_partition(&case, &[(0, 1)], &[]).unwrap();
        let mut ports = make_ports(&case, &plan).unwrap();
        // consistent: equal far voltages, exactly opposite currents
        let v0 = c(1.01, -0.02);
        let v1 = c(0.98, 0.03);
        let y = ports[0].cut_y;
        ports[0].v_local = v0;
        ports[1].v_local = v1;
        ports[0].i = y * (v1 - v0);
        ports[1].i = y * (v0 - v1);
        ports[0].v_d = v1;
        ports[1].v_d = v0;
        ports[0].s = ports[0].g * v1 + ports[0].i;
        ports[1].s = ports[1].g * v0 + ports[1].i;
        let before = ports.clone();
        relax_boundary(&mut ports);
        for (a, b) in ports.iter().zip(&before) {
            assert!((a.v_d - b.v_d).norm() < 1e-15);
            assert!((a.i - b.i).norm() < 1e-15);
            assert!((a.s - b.s).norm() < 1e-15);
        }
        let (ok, mism) = check_convergence(&ports, 1e-12);
        assert!(ok);
        assert!(mism.iter().all(|&m| m < 1e-15));
    }

    #[test]
    fn convergence_boundary_is_inclusive() {
        let case = chain_case(2);
        let plan = make_partition(&case, &[(0, 1)], &[]).unwrap();
        let mut ports = make_ports(&case, &plan).unwrap();
        ports[0].i = c(0.5, 0.1);
        ports[1].i = c(-0.5, -0.1);
        let (ok, m) = check_convergence(&ports, 1e-6);
        assert!(ok);
        assert_eq!(m[0], 0.0);
        ports[1].i = c(-0.4, 0.0);
        let (ok2, m2) = check_convergence(&ports, 1e-6);
        assert!(!ok2);
        assert!((m2[0] - (c(0.1, 0.1)).norm()).abs() < 1e-15);
        // mismatch exactly sigma passes
        ports[0].i = c(1e-6, 0.0);
        ports[1].i = Complex64::zero();
        let (ok3, _) = check_convergence(&ports, 1e-6);
        assert!(ok3);
    }

    #[test]
    fn jacobi_update_is_order_independent() {
        let case = chain_case(4);
        let plan = make_partition(&case, &[(0, 1), (2, 3)], &[]).unwrap();
        let mut ports = make_ports(&case, &plan).unwrap();
        for (k, p) in ports.iter_mut().enumerate() {
            p.v_local = c(1.0 + 0.01 * k as f64, -0.005 * k as f64);
            p.i = c(0.1 * k as f64, 0.02);
        }
        // same update applied to a reversed copy
        let mut fwd = ports.clone();
        relax_boundary(&mut fwd);
        let mut rev = ports.clone();
        let last = rev.len() - 1;
        rev.reverse();
        for p in &mut rev {
            p.peer = last - p.peer;
        }
        relax_boundary(&mut rev);
        rev.reverse();
        for p in &mut rev {
            p.peer = last - p.peer;
        }
        for (a, b) in fwd.iter().zip(&rev) {
            assert_eq!(a.v_d, b.v_d);
            assert_eq!(a.i, b.i);
            assert_eq!(a.s, b.s);
        }
    }

    #[test]
    fn schur_block_diagonal_decouples() {
        // all couplings zero: interface and interiors solve independently
        let mut m = CMatrix::zeros(5, 5);
        for i in 0..5 {
            m[(i, i)] = c(2.0 + i as f64, 1.0);
        }
        let sub = vec![0, 0, 1, 1, 0];
        let ext = vec![false, false, false, false, true];
        let blocks = SchurBlocks::new(&m, &sub, &ext).unwrap();
        let rhs: Vec<Complex64> = (0..5).map(|i| c(1.0, i as f64)).collect();
        let x = blocks.solve_full(&rhs);
        for i in 0..5 {
            assert!((x[i] - rhs[i] / m[(i, i)]).norm() < 1e-14);
        }
    }

    #[test]
    fn schur_singular_block_names_subdomain() {
        let mut m = CMatrix::zeros(3, 3);
        m[(0, 0)] = c(1.0, 0.0);
        // row 1 zero: subdomain 1 singular
        m[(2, 2)] = c(1.0, 0.0);
        let sub = vec![0, 1, 0];
        let ext = vec![false, false, true];
        match SchurBlocks::new(&m, &sub, &ext) {
            Err(Error::SingularSubdomain { subdomain, .. }) => assert_eq!(subdomain, 1),
            other => panic!("unexpected: {other:?}"),
        }
    }

    #[test]
    fn schur_rhs_shape_checked() {
        let mut m = CMatrix::zeros(2, 2);
        m[(0, 0)] = c(1.0, 0.0);
        m[(1, 1)] = c(1.0, 0.0);
        let blocks = SchurBlocks::new(&m, &[0, 0], &[false, true]).unwrap();
        assert!(schur_solve(&blocks, &[c(1.0, 0.0)]).is_err());
    }
}
