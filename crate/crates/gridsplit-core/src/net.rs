//! Network data model: buses, branches, generators, nodal admittance
//! assembly, and the direct (monolithic) solve used as the benchmark path.

use alloc::collections::BTreeMap;
use alloc::format;
use alloc::string::String;
use alloc::vec;
use alloc::vec::Vec;
use num_complex::Complex64;
use num_traits::Zero;

use crate::error::{Error, Result};
use crate::linalg::{norm_inf, CMatrix, LuFactor};

#[derive(Debug, Clone, Copy, PartialEq, Eq)]
pub enum BusKind {
    Slack,
    Pv,
    Pq,
}

/// A network bus. `load` and `shunt` are per-unit on the system base.
#[derive(Debug, Clone, PartialEq)]
pub struct Bus {
    pub id: usize,
    pub kind: BusKind,
    pub base_kv: f64,
    /// Fixed shunt admittance (pu).
    pub shunt: Complex64,
    /// Complex load power demand (pu).
    pub load: Complex64,
}

/// A series branch (line or transformer) in the pi model.
#[derive(Debug, Clone, PartialEq)]
pub struct Branch {
    pub from: usize,
    pub to: usize,
    pub r: f64,
    pub x: f64,
    /// Total line charging susceptance (pu); half is stamped at each end.
    pub charging: f64,
    pub in_service: bool,
}

impl Branch {
    /// Series admittance y = 1/(r + jx).
    pub fn series_y(&self) -> Complex64 {
        Complex64::new(1.0, 0.0) / Complex64::new(self.r, self.x)
    }
}

#[derive(Debug, Clone, Copy, PartialEq, Eq)]
pub enum DeviceKind {
    Gfm,
    Machine,
}

/// A generator record: which bus it sits on, what model drives it, and the
/// name of the parameter block holding its constants.
#[derive(Debug, Clone, PartialEq)]
pub struct Generator {
    pub bus: usize,
    pub kind: DeviceKind,
    pub params: String,
    /// Scheduled active power (pu). Ignored for the slack device.
    pub pg: f64,
    /// Scheduled reactive power (pu); refined by initialization.
    pub qg: f64,
    /// Voltage magnitude setpoint (pu) for slack/PV devices.
    pub vg: f64,
}

#[derive(Debug, Clone, PartialEq)]
pub struct PowerFlowCase {
    pub buses: Vec<Bus>,
    pub branches: Vec<Branch>,
    pub generators: Vec<Generator>,
    pub base_mva: f64,
    pub frequency_hz: f64,
}

impl PowerFlowCase {
    pub fn n_buses(&self) -> usize {
        self.buses.len()
    }

    /// Nominal angular frequency (rad/s).
    pub fn omega_s(&self) -> f64 {
        2.0 * core::f64::consts::PI * self.frequency_hz
    }

    pub fn branch_between(&self, a: usize, b: usize) -> Option<usize> {
        self.branches
            .iter()
            .position(|br| (br.from == a && br.to == b) || (br.from == b && br.to == a))
    }

    /// Check every structural invariant; returns the validated case.
    pub fn validate(self) -> Result<Self> {
        if self.base_mva.is_nan() || self.base_mva <= 0.0 {
            return Err(Error::Validation("base_mva must be positive".into()));
        }
        let n = self.buses.len();
        let mut seen = vec![false; n];
        for b in &self.buses {
            if b.id >= n {
                return Err(Error::Validation(format!(
                    "bus ids must be contiguous 1..{}: found bus {}",
                    n,
                    b.id + 1
                )));
            }
            if seen[b.id] {
                return Err(Error::Validation(format!("duplicate bus id {}", b.id + 1)));
            }
            seen[b.id] = true;
        }
        let slack_count = self.buses.iter().filter(|b| b.kind == BusKind::Slack).count();
        if slack_count != 1 {
            return Err(Error::Validation(format!(
                "expected exactly one slack bus, found {slack_count}"
            )));
        }
        for br in &self.branches {
            if br.from == br.to {
                return Err(Error::Validation(format!(
                    "branch {}-{} connects a bus to itself",
                    br.from + 1,
                    br.to + 1
                )));
            }
            if br.from >= n || br.to >= n {
                return Err(Error::Validation(format!(
                    "branch {}-{} references an unknown bus",
                    br.from + 1,
                    br.to + 1
                )));
            }
            if br.in_service {
                let y = br.series_y();
                if !y.re.is_finite() || !y.im.is_finite() || y.is_zero() {
                    return Err(Error::Validation(format!(
                        "branch {}-{} has non-finite or zero series admittance",
                        br.from + 1,
                        br.to + 1
                    )));
                }
            }
        }
        for g in &self.generators {
            if g.bus >= n {
                return Err(Error::Validation(format!(
                    "generator references unknown bus {}",
                    g.bus + 1
                )));
            }
        }
        if !connected(n, self.branches.iter().filter(|b| b.in_service)) {
            return Err(Error::Validation("network is not connected".into()));
        }
        Ok(self)
    }
}

fn connected<'a>(n: usize, branches: impl Iterator<Item = &'a Branch>) -> bool {
    if n == 0 {
        return true;
    }
    let mut adj: Vec<Vec<usize>> = vec![Vec::new(); n];
    for b in branches {
        adj[b.from].push(b.to);
        adj[b.to].push(b.from);
    }
    let mut seen = vec![false; n];
    let mut stack = vec![0usize];
    seen[0] = true;
    let mut count = 1;
    while let Some(u) = stack.pop() {
        for &v in &adj[u] {
            if !seen[v] {
                seen[v] = true;
                count += 1;
                stack.push(v);
            }
        }
    }
    count == n
}

/// Sparse symmetric nodal admittance matrix.
#[derive(Debug, Clone, PartialEq)]
pub struct AdmittanceMatrix {
    n: usize,
    entries: BTreeMap<(usize, usize), Complex64>,
}

impl AdmittanceMatrix {
    pub fn new(n: usize) -> Self {
        Self { n, entries: BTreeMap::new() }
    }

    pub fn dimension(&self) -> usize {
        self.n
    }

    pub fn get(&self, i: usize, j: usize) -> Complex64 {
        self.entries.get(&(i, j)).copied().unwrap_or_else(Complex64::zero)
    }

    pub fn add(&mut self, i: usize, j: usize, y: Complex64) {
        assert!(i < self.n && j < self.n, "index out of range");
        let e = self.entries.entry((i, j)).or_insert_with(Complex64::zero);
        *e += y;
        if e.is_zero() {
            self.entries.remove(&(i, j));
        }
    }

    /// Stamp a shunt admittance on bus `i`.
    pub fn add_shunt(&mut self, i: usize, y: Complex64) {
        self.add(i, i, y);
    }

    /// Stamp a series admittance between buses `i` and `j`.
    pub fn add_series(&mut self, i: usize, j: usize, y: Complex64) {
        self.add(i, i, y);
        self.add(j, j, y);
        self.add(i, j, -y);
        self.add(j, i, -y);
    }

    pub fn iter(&self) -> impl Iterator<Item = (usize, usize, Complex64)> + '_ {
        self.entries.iter().map(|(&(i, j), &y)| (i, j, y))
    }

    pub fn to_dense(&self) -> CMatrix {
        let mut m = CMatrix::zeros(self.n, self.n);
        for (i, j, y) in self.iter() {
            m[(i, j)] = y;
        }
        m
    }

    /// Largest entrywise asymmetry; exactly zero for branch-stamped matrices.
    pub fn asymmetry(&self) -> f64 {
        let mut worst = 0.0f64;
        for (&(i, j), &y) in &self.entries {
            let d = (y - self.get(j, i)).norm();
            worst = worst.max(d);
        }
        worst
    }
}

/// Assemble the nodal admittance matrix from branch and bus shunt data.
/// Loads are not included here; the engine folds them in as constant
/// impedances once the initial operating point is known.
pub fn build_admittance(case: &PowerFlowCase) -> AdmittanceMatrix {
    let mut y = AdmittanceMatrix::new(case.n_buses());
    for br in case.branches.iter().filter(|b| b.in_service) {
        y.add_series(br.from, br.to, br.series_y());
        let half = Complex64::new(0.0, br.charging / 2.0);
        y.add_shunt(br.from, half);
        y.add_shunt(br.to, half);
    }
    for b in &case.buses {
        if !b.shunt.is_zero() {
            y.add_shunt(b.id, b.shunt);
        }
    }
    y
}

/// Direct dense-LU solve of `Y V = I`. This is the reference path every
/// decomposed result is checked against.
pub fn monolithic_solve(y: &AdmittanceMatrix, i: &[Complex64]) -> Result<Vec<Complex64>> {
    if i.len() != y.dimension() {
        return Err(Error::Shape(format!(
            "rhs length {} does not match dimension {}",
            i.len(),
            y.dimension()
        )));
    }
    let dense = y.to_dense();
    let lu = LuFactor::new(&dense)?;
    let v = lu.solve(i);
    #[cfg(debug_assertions)]
    {
        let r: Vec<Complex64> = dense
            .mul_vec(&v)
            .iter()
            .zip(i)
            .map(|(a, b)| a - b)
            .collect();
        debug_assert!(
            norm_inf(&r) <= 1e-10 * norm_inf(i).max(1e-300),
            "monolithic solve residual out of bounds"
        );
    }
    let _ = norm_inf; // referenced unconditionally to keep release builds clean
    Ok(v)
}
