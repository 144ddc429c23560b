//! Time-domain simulation engine.
//!
//! One coordinator drives the time loop. Each step applies due events,
//! advances device ODE states against frozen bus voltages, then resolves
//! the network algebraically: the decomposed path iterates subsystem solves
//! and boundary relaxation until the port currents reconcile, while the
//! optional benchmark path solves the undecomposed system directly with the
//! same devices, schedule, and events. Subsystem solves within a relaxation
//! iteration are independent; they are dispatched through a [`ParallelMap`]
//! and joined in index order, so results are identical for any worker count.

use alloc::collections::BTreeMap;
use alloc::format;
use alloc::vec;
use alloc::vec::Vec;
use num_complex::Complex64;
use num_traits::{Float, Zero};

use crate::decomp::{
    build_augmented, check_convergence, make_partition, make_ports, relax_boundary,
    thevenin_admittance, AugmentedSubsystem, BoundaryPort, PartitionPlan, SchurBlocks,
};
use crate::error::{Error, Result};
use crate::gfm::{
    self, aggregate, build_state_space, clamp_current_refs, AggregateSpec, GfmInterface,
    GfmParams, GfmStateSpace,
};
use crate::integrate::{advance, step_size_at, IntegratorKind, StepSchedule};
use crate::linalg::LuFactor;
use crate::machine::{
    electrical_power, norton, swing_derivative, MachineParams, MachineState,
};
use crate::net::{AdmittanceMatrix, PowerFlowCase};
use crate::powerflow::solve_flat_start;

#[derive(Debug, Clone, Copy, PartialEq, Eq)]
pub enum EventKind {
    BusFaultApply,
    BusFaultClear,
    LineChange,
    LoadStep,
}

#[derive(Debug, Clone, Copy, PartialEq, Eq)]
pub enum EventTarget {
    Bus(usize),
    Branch(usize),
}

/// A scheduled network disturbance. Payload meaning depends on the kind:
/// fault shunt admittance (pu), series admittance delta (pu), or complex
/// power delta (pu) for load steps.
#[derive(Debug, Clone, Copy, PartialEq)]
pub struct Event {
    pub time: f64,
    pub kind: EventKind,
    pub target: EventTarget,
    pub payload: Complex64,
}

/// How boundary conductances are chosen.
#[derive(Debug, Clone, Copy, PartialEq, Eq, Default)]
pub enum BoundaryMode {
    /// Far subsystem's Thevenin admittance at the far cut bus. Settles in a
    /// couple of iterations.
    #[default]
    Thevenin,
    /// The cut branch's own series admittance.
    CutAdmittance,
}

#[derive(Debug, Clone, PartialEq)]
pub struct ScenarioSpec {
    /// Stage-1 cuts as (from, to) bus pairs.
    pub subsystem_cuts: Vec<(usize, usize)>,
    /// Stage-2 cuts as (from, to) bus pairs.
    pub subdomain_cuts: Vec<(usize, usize)>,
    pub events: Vec<Event>,
    pub horizon: f64,
    /// Port-current convergence tolerance.
    pub sigma: f64,
    pub schedule: StepSchedule,
    pub integrator: IntegratorKind,
    pub benchmark: bool,
    pub boundary_mode: BoundaryMode,
    /// Device sub-step ceiling for the converter states (s).
    pub gfm_substep: f64,
    pub max_relax_iters: usize,
}

impl Default for ScenarioSpec {
    fn default() -> Self {
        Self {
            subsystem_cuts: Vec::new(),
            subdomain_cuts: Vec::new(),
            events: Vec::new(),
            horizon: 5.0,
            sigma: 1e-8,
            schedule: StepSchedule::default(),
            integrator: IntegratorKind::Rkf45,
            benchmark: false,
            boundary_mode: BoundaryMode::Thevenin,
            gfm_substep: 1e-4,
            max_relax_iters: 50,
        }
    }
}

/// Synchronous machine attached to a bus. When `p_m_ref_override` is unset,
/// initialization balances the reference against the solved electrical
/// power; an explicit override is checked against the steady-state test.
#[derive(Debug, Clone)]
pub struct MachineSpec {
    pub bus: usize,
    pub params: MachineParams,
    pub p_m_ref_override: Option<f64>,
}

/// Multi-module converter plant attached to a bus.
#[derive(Debug, Clone)]
pub struct GfmSpec {
    pub bus: usize,
    pub module: GfmParams,
    pub n_modules: usize,
    pub transformer_count: usize,
    /// Rated phase-peak voltage (V) defining 1 pu at the device.
    pub v_phase_peak: f64,
    /// Current-reference limit (pu on the device base).
    pub i_clamp_pu: f64,
}

#[derive(Debug, Clone, Default)]
pub struct Devices {
    pub machines: Vec<MachineSpec>,
    pub gfms: Vec<GfmSpec>,
}

/// Maps independent subsystem solves to their solutions in index order.
pub trait ParallelMap: Sync {
    fn map(
        &self,
        n: usize,
        f: &(dyn Fn(usize) -> Vec<Complex64> + Sync),
    ) -> Vec<Vec<Complex64>>;
}

/// In-process sequential executor.
#[derive(Debug, Default, Clone, Copy)]
pub struct SerialMap;

impl ParallelMap for SerialMap {
    fn map(
        &self,
        n: usize,
        f: &(dyn Fn(usize) -> Vec<Complex64> + Sync),
    ) -> Vec<Vec<Complex64>> {
        (0..n).map(f).collect()
    }
}

/// Wall-clock source for phase timing; the core default reports zeros.
pub trait Clock {
    fn now(&self) -> f64;
}

#[derive(Debug, Default, Clone, Copy)]
pub struct NullClock;

impl Clock for NullClock {
    fn now(&self) -> f64 {
        0.0
    }
}

/// Captured traces over the run. All per-sample vectors share the time axis;
/// event instants contribute two samples (pre- and post-event).
#[derive(Debug, Clone, Default)]
pub struct TimeSeriesResult {
    pub times: Vec<f64>,
    /// Bus voltages per sample (decomposed path).
    pub bus_v: Vec<Vec<Complex64>>,
    pub machine_buses: Vec<usize>,
    pub machine_states: Vec<Vec<MachineState>>,
    pub gfm_buses: Vec<usize>,
    pub gfm_states: Vec<Vec<Vec<f64>>>,
    /// Relaxation iterations behind each sample.
    pub iterations: Vec<usize>,
    /// True when the converter current limiter engaged during the step.
    pub clamped: Vec<bool>,
    /// Benchmark bus voltages, when the monolithic path ran in lockstep.
    pub bench_v: Option<Vec<Vec<Complex64>>>,
}

#[derive(Debug, Clone, Default)]
pub struct StepLog {
    pub t: f64,
    pub iterations: usize,
    /// Max port mismatch after each relaxation iteration.
    pub mismatches: Vec<f64>,
    pub wall_device: f64,
    pub wall_solve: f64,
    pub wall_bench: f64,
}

#[derive(Debug, Clone, Default)]
pub struct ConvergenceLog {
    pub steps: Vec<StepLog>,
}

impl ConvergenceLog {
    pub fn total_iterations(&self) -> usize {
        self.steps.iter().map(|s| s.iterations).sum()
    }
}

/// Per-bus deviation between the decomposed and benchmark traces.
#[derive(Debug, Clone)]
pub struct DeviationReport {
    pub per_bus: Vec<f64>,
    pub max_deviation: f64,
    pub worst_bus: usize,
    pub worst_time: f64,
}

pub fn compare_to_benchmark(result: &TimeSeriesResult) -> Result<DeviationReport> {
    let bench = result
        .bench_v
        .as_ref()
        .ok_or_else(|| Error::Shape("no benchmark trace in result".into()))?;
    let n = result.bus_v.first().map_or(0, Vec::len);
    let mut per_bus = vec![0.0f64; n];
    let mut max_deviation = 0.0;
    let mut worst_bus = 0;
    let mut worst_time = 0.0;
    for (k, (dec, mono)) in result.bus_v.iter().zip(bench).enumerate() {
        for b in 0..n {
            let d = (dec[b] - mono[b]).norm();
            if d > per_bus[b] {
                per_bus[b] = d;
            }
            if d > max_deviation {
                max_deviation = d;
                worst_bus = b;
                worst_time = result.times[k];
            }
        }
    }
    Ok(DeviationReport { per_bus, max_deviation, worst_bus, worst_time })
}

struct GfmDevice {
    bus: usize,
    params: GfmParams,
    ss: GfmStateSpace,
    iface: GfmInterface,
    i_clamp_pu: f64,
}

struct PathState {
    v_bus: Vec<Complex64>,
    machines: Vec<MachineState>,
    gfm_x: Vec<Vec<f64>>,
}

enum SolvePath {
    Direct(LuFactor),
    Schur(SchurBlocks),
}

struct SubsystemSolver {
    aug: AugmentedSubsystem,
    path: SolvePath,
}

impl SubsystemSolver {
    fn solve(&self, rhs: &[Complex64]) -> Vec<Complex64> {
        match &self.path {
            SolvePath::Direct(lu) => lu.solve(rhs),
            SolvePath::Schur(blocks) => blocks.solve_full(rhs),
        }
    }
}

pub struct Engine {
    case: PowerFlowCase,
    spec: ScenarioSpec,
    machines: Vec<(MachineSpec, usize)>,
    gfms: Vec<GfmDevice>,
    // network configuration shared by both paths
    series_delta: Vec<Complex64>,
    load_y: Vec<Complex64>,
    fault_y: BTreeMap<usize, Complex64>,
    // solvers
    plan: PartitionPlan,
    ports: Vec<BoundaryPort>,
    subsystems: Vec<SubsystemSolver>,
    mono_lu: Option<LuFactor>,
    // dynamic state
    dec: PathState,
    mono: Option<PathState>,
    initialized: bool,
}

impl Engine {
    pub fn new(case: PowerFlowCase, devices: Devices, spec: ScenarioSpec) -> Result<Self> {
        let case = case.validate()?;
        if spec.sigma.is_nan() || spec.sigma <= 0.0 {
            return Err(Error::Validation("sigma must be positive".into()));
        }
        if spec.gfm_substep.is_nan() || spec.gfm_substep <= 0.0 {
            return Err(Error::Validation("gfm_substep must be positive".into()));
        }
        let mut last = f64::NEG_INFINITY;
        for e in &spec.events {
            if e.time < 0.0 {
                return Err(Error::Validation("event times must be nonnegative".into()));
            }
            if e.time < last {
                return Err(Error::Validation("events must be sorted by time".into()));
            }
            last = e.time;
            match e.target {
                EventTarget::Bus(b) if b < case.n_buses() => {}
                EventTarget::Branch(i) if i < case.branches.len() => {}
                EventTarget::Bus(b) => return Err(Error::UnknownTarget(format!("bus {}", b + 1))),
                EventTarget::Branch(i) => {
                    return Err(Error::UnknownTarget(format!("branch {}", i + 1)))
                }
            }
        }
        if last > f64::NEG_INFINITY && spec.horizon <= last {
            return Err(Error::Validation(format!(
                "horizon {} does not exceed the last event time {last}",
                spec.horizon
            )));
        }

        let n = case.n_buses();
        let plan = make_partition(&case, &spec.subsystem_cuts, &spec.subdomain_cuts)?;
        let ports = make_ports(&case, &plan)?;
        let machines: Vec<(MachineSpec, usize)> = devices
            .machines
            .into_iter()
            .enumerate()
            .map(|(k, m)| (m, k))
            .collect();
        let mut gfms = Vec::new();
        for g in devices.gfms {
            if g.n_modules == 0 {
                return Err(Error::Validation("aggregate needs at least one module".into()));
            }
            let module = g.module.with_zero_power_op(g.v_phase_peak);
            let agg_spec = AggregateSpec {
                n_modules: g.n_modules,
                module_rating: module.s_rating,
                system_base: case.base_mva * 1e6,
                transformer_count: g.transformer_count,
            };
            let params = aggregate(&agg_spec, &module);
            let ss = build_state_space(&params)?;
            gfms.push(GfmDevice {
                bus: g.bus,
                params,
                ss,
                iface: GfmInterface::new(
                    Complex64::zero(),
                    Complex64::new(1.0, 0.0),
                    g.v_phase_peak,
                    case.base_mva * 1e6,
                ),
                i_clamp_pu: g.i_clamp_pu,
            });
        }
        let series_delta = vec![Complex64::zero(); case.branches.len()];
        Ok(Self {
            dec: PathState { v_bus: vec![Complex64::zero(); n], machines: Vec::new(), gfm_x: Vec::new() },
            mono: None,
            machines,
            gfms,
            series_delta,
            load_y: vec![Complex64::zero(); n],
            fault_y: BTreeMap::new(),
            plan,
            ports,
            subsystems: Vec::new(),
            mono_lu: None,
            case,
            spec,
            initialized: false,
        })
    }

    /// Aggregated converter parameters (for reporting and analysis).
    pub fn gfm_params(&self) -> Vec<(usize, GfmParams)> {
        self.gfms.iter().map(|g| (g.bus, g.params)).collect()
    }

    pub fn omega_s(&self) -> f64 {
        self.case.omega_s()
    }

    /// The full admittance matrix of the current network configuration,
    /// including constant-impedance loads, fault shunts, and machine Norton
    /// shunts.
    pub fn admittance(&self) -> AdmittanceMatrix {
        self.assemble_y()
    }

    fn assemble_y(&self) -> AdmittanceMatrix {
        let n = self.case.n_buses();
        let mut y = AdmittanceMatrix::new(n);
        for (k, br) in self.case.branches.iter().enumerate() {
            if !br.in_service {
                continue;
            }
            let ys = br.series_y() + self.series_delta[k];
            y.add_series(br.from, br.to, ys);
            let half = Complex64::new(0.0, br.charging / 2.0);
            y.add_shunt(br.from, half);
            y.add_shunt(br.to, half);
        }
        for b in &self.case.buses {
            if !b.shunt.is_zero() {
                y.add_shunt(b.id, b.shunt);
            }
        }
        for (b, yl) in self.load_y.iter().enumerate() {
            if !yl.is_zero() {
                y.add_shunt(b, *yl);
            }
        }
        for (&b, yf) in &self.fault_y {
            y.add_shunt(b, *yf);
        }
        for (m, _) in &self.machines {
            y.add_shunt(m.bus, Complex64::new(0.0, -1.0 / m.params.xd_p));
        }
        y
    }

    /// Refresh every factored representation after the admittance changed.
    fn rebuild_solvers(&mut self) -> Result<()> {
        let y = self.assemble_y();
        // line changes may have retuned a cut branch
        for p in &mut self.ports {
            p.cut_y = self.case.branches[p.branch].series_y() + self.series_delta[p.branch];
        }
        // boundary conductances
        let cut_series: Vec<Complex64> = self
            .plan
            .cut_branches
            .iter()
            .map(|&bi| self.case.branches[bi].series_y() + self.series_delta[bi])
            .collect();
        for k in 0..self.ports.len() {
            let peer = self.ports[k].peer;
            let (far_sub, far_bus) = (self.ports[peer].subsystem, self.ports[peer].local_bus);
            self.ports[k].g = match self.spec.boundary_mode {
                BoundaryMode::Thevenin => {
                    thevenin_admittance(&y, &self.case, &self.plan, &cut_series, far_sub, far_bus)?
                }
                BoundaryMode::CutAdmittance => self.ports[k].cut_y,
            };
        }
        let mut subsystems = Vec::with_capacity(self.plan.n_subsystems);
        for sub in 0..self.plan.n_subsystems {
            let aug = build_augmented(&y, &self.plan, &self.ports, sub)?;
            let dim = aug.y_mod.dimension();
            let path = if self.plan.n_subdomains[sub] > 1 {
                // interface rows: buses touching a stage-2 cut of this subsystem
                let mut iface_buses = alloc::collections::BTreeSet::new();
                for &bi in &self.plan.subdomain_cut_branches {
                    let br = &self.case.branches[bi];
                    if self.plan.subsystem_of[br.from] == sub {
                        iface_buses.insert(br.from);
                        iface_buses.insert(br.to);
                    }
                }
                let mut sub_of_row = vec![0usize; dim];
                let mut is_iface = vec![false; dim];
                for (&bus, &row) in &aug.local_of {
                    sub_of_row[row] = self.plan.subdomain_of[bus];
                    is_iface[row] = iface_buses.contains(&bus);
                }
                for &(pi, row) in &aug.port_rows {
                    let bus = self.ports[pi].local_bus;
                    sub_of_row[row] = self.plan.subdomain_of[bus];
                }
                SolvePath::Schur(SchurBlocks::new(&aug.y_mod.to_dense(), &sub_of_row, &is_iface)?)
            } else {
                SolvePath::Direct(LuFactor::new(&aug.y_mod.to_dense())?)
            };
            subsystems.push(SubsystemSolver { aug, path });
        }
        self.subsystems = subsystems;
        self.mono_lu = Some(LuFactor::new(&y.to_dense())?);
        Ok(())
    }

    /// Device Norton injections for a path's current states.
    fn injections(&self, st: &PathState) -> Vec<Complex64> {
        let mut inj = vec![Complex64::zero(); self.case.n_buses()];
        for (m, k) in &self.machines {
            let (i_n, _) = norton(&m.params, &st.machines[*k]);
            inj[m.bus] += i_n;
        }
        for (g, x) in self.gfms.iter().zip(&st.gfm_x) {
            let (i, _) = g.iface.injection(x);
            inj[g.bus] += i;
        }
        inj
    }

    fn solve_monolithic(&self, st: &PathState) -> Result<Vec<Complex64>> {
        let inj = self.injections(st);
        Ok(self.mono_lu.as_ref().expect("solvers built").solve(&inj))
    }

    /// Iterate parallel subsystem solves + boundary relaxation until the
    /// port currents reconcile. Returns the iteration count and the
    /// mismatch after each iteration.
    fn solve_decomposed(
        &mut self,
        exec: &dyn ParallelMap,
        t: f64,
    ) -> Result<(usize, Vec<f64>)> {
        let inj = self.injections(&self.dec);
        let mut mismatch_seq = Vec::new();
        for iter in 1..=self.spec.max_relax_iters {
            let rhss: Vec<Vec<Complex64>> = self
                .subsystems
                .iter()
                .map(|ss| {
                    let mut rhs = vec![Complex64::zero(); ss.aug.y_mod.dimension()];
                    for (row, &bus) in ss.aug.buses.iter().enumerate() {
                        rhs[row] = inj[bus];
                    }
                    for &(pi, row) in &ss.aug.port_rows {
                        rhs[row] = self.ports[pi].s;
                    }
                    rhs
                })
                .collect();
            let subsystems = &self.subsystems;
            let sols = exec.map(subsystems.len(), &|k| subsystems[k].solve(&rhss[k]));
            for (ss, sol) in self.subsystems.iter().zip(&sols) {
                for &(pi, row) in &ss.aug.port_rows {
                    let p = &mut self.ports[pi];
                    p.v_local = sol[ss.aug.local_of[&p.local_bus]];
                    p.v_d = sol[row];
                    p.i = p.cut_y * (p.v_d - p.v_local);
                }
            }
            let (current_ok, mismatches) = check_convergence(&self.ports, self.spec.sigma);
            let worst = mismatches.iter().cloned().fold(0.0, f64::max);
            mismatch_seq.push(worst);
            // A port terminated by a zero conductance (a floating subsystem
            // is a pure current source) carries a structurally constant
            // current, so the current test alone can accept a stale
            // boundary voltage right after a topology change. Require the
            // Jacobi fixed point in the voltages as well.
            let voltage_ok = self
                .ports
                .iter()
                .all(|p| (p.v_d - self.ports[p.peer].v_local).norm() <= self.spec.sigma);
            if current_ok && voltage_ok {
                for (ss, sol) in self.subsystems.iter().zip(&sols) {
                    for (row, &bus) in ss.aug.buses.iter().enumerate() {
                        self.dec.v_bus[bus] = sol[row];
                    }
                }
                return Ok((iter, mismatch_seq));
            }
            relax_boundary(&mut self.ports);
        }
        Err(Error::RelaxationDiverged {
            t,
            max_iters: self.spec.max_relax_iters,
            mismatch: mismatch_seq.last().copied().unwrap_or(f64::NAN),
            sigma: self.spec.sigma,
        })
    }

    /// Seed all port values from a full network solution.
    fn seed_ports(&mut self, v: &[Complex64]) {
        for k in 0..self.ports.len() {
            let peer = self.ports[k].peer;
            let vl = v[self.ports[k].local_bus];
            let vf = v[self.ports[peer].local_bus];
            let p = &mut self.ports[k];
            p.v_local = vl;
            p.v_d = vf;
            p.i = p.cut_y * (vf - vl);
            p.s = p.g * vf + p.i;
        }
    }

    /// Flat-start initialization: solve the pre-disturbance network, convert
    /// loads to impedances, place every device at its exact equilibrium, and
    /// seed the boundary ports from the monolithic solution.
    pub fn initialize(&mut self) -> Result<()> {
        let pf = solve_flat_start(&self.case)?;
        for b in &self.case.buses {
            if !b.load.is_zero() {
                self.load_y[b.id] = b.load.conj() / pf.v[b.id].norm_sqr();
            }
        }
        // device equilibria from the solved operating point
        let mut mstates = Vec::with_capacity(self.machines.len());
        for (m, _) in &mut self.machines {
            let v = pf.v[m.bus];
            let i_gen = (pf.s_net[m.bus] / v).conj() + self.load_y[m.bus] * v;
            let e = v + Complex64::new(0.0, m.params.xd_p) * i_gen;
            let p_e = (e * i_gen.conj()).re;
            m.params.p_m_ref = m.p_m_ref_override.unwrap_or(p_e);
            mstates.push(MachineState {
                delta: e.arg(),
                omega: m.params.omega_s,
                p_m: p_e,
                e_mag: e.norm(),
            });
        }
        let mut gxs = Vec::with_capacity(self.gfms.len());
        for g in &mut self.gfms {
            let v = pf.v[g.bus];
            let i_gen = (pf.s_net[g.bus] / v).conj() + self.load_y[g.bus] * v;
            g.iface = GfmInterface::new(i_gen, v, g.iface.v_base, self.case.base_mva * 1e6);
            gxs.push(vec![0.0; gfm::N_STATES]);
        }
        self.dec = PathState { v_bus: pf.v.clone(), machines: mstates, gfm_x: gxs };

        // steady-state verification against the assembled network
        self.rebuild_solvers()?;
        let v0 = self.solve_monolithic(&self.dec)?;
        for (m, k) in &self.machines {
            let st = &self.dec.machines[*k];
            let p_e = electrical_power(&m.params, st, v0[m.bus]);
            let (dd, dw, dp) = swing_derivative(&m.params, st, p_e);
            let res = dd.abs().max(dw.abs()).max(dp.abs());
            if res > 1e-8 {
                return Err(Error::SteadyState {
                    device: format!("machine@bus{}", m.bus + 1),
                    residual: res,
                    limit: 1e-8,
                });
            }
        }
        for (g, x) in self.gfms.iter().zip(&self.dec.gfm_x) {
            let (dvd, dvq) = g.iface.grid_input(v0[g.bus]);
            let u = [dvd, dvq, 0.0, 0.0];
            let dx = gfm::derivative(&g.ss, x, &u)?;
            // residual per state, normalized by that state's base
            let ib = g.iface.i_base;
            let scale = [
                ib, ib, g.iface.v_base, g.iface.v_base, ib, ib, ib, ib, ib, ib,
                g.params.s_rating, 1.0, g.params.s_rating,
            ];
            let res = dx
                .iter()
                .zip(scale.iter())
                .fold(0.0f64, |a, (d, s)| a.max(d.abs() / s));
            if res > 1e-8 {
                return Err(Error::SteadyState {
                    device: format!("gfm@bus{}", g.bus + 1),
                    residual: res,
                    limit: 1e-8,
                });
            }
        }
        self.dec.v_bus = v0.clone();
        if self.spec.benchmark {
            self.mono = Some(PathState {
                v_bus: v0.clone(),
                machines: self.dec.machines.clone(),
                gfm_x: self.dec.gfm_x.clone(),
            });
        }
        self.seed_ports(&v0);
        self.initialized = true;
        Ok(())
    }

    fn advance_path(
        machines: &[(MachineSpec, usize)],
        gfms: &[GfmDevice],
        spec: &ScenarioSpec,
        st: &mut PathState,
        t: f64,
        h: f64,
    ) -> Result<bool> {
        for (m, k) in machines {
            let v = st.v_bus[m.bus];
            let params = m.params;
            let e_mag = st.machines[*k].e_mag;
            let f = move |_t: f64, x: &[f64]| {
                let s = MachineState::from_vec(x, e_mag);
                let p_e = electrical_power(&params, &s, v);
                let (dd, dw, dp) = swing_derivative(&params, &s, p_e);
                vec![dd, dw, dp]
            };
            let cur = st.machines[*k].to_vec();
            let next = advance(spec.integrator, &f, &cur, t, h)?;
            st.machines[*k] = MachineState::from_vec(&next, e_mag);
        }
        let mut clamped = false;
        for (g, x) in gfms.iter().zip(&mut st.gfm_x) {
            let (dvd, dvq) = g.iface.grid_input(st.v_bus[g.bus]);
            let u = [dvd, dvq, 0.0, 0.0];
            let ss = &g.ss;
            let f = move |_t: f64, x: &[f64]| gfm::derivative(ss, x, &u).expect("13-state shape");
            let n_sub = Float::ceil(h / spec.gfm_substep).max(1.0) as usize;
            let hs = h / n_sub as f64;
            let mut ts = t;
            for _ in 0..n_sub {
                *x = advance(spec.integrator, &f, x, ts, hs)?;
                if clamp_current_refs(x, g.i_clamp_pu, g.iface.i_base) {
                    clamped = true;
                }
                ts += hs;
            }
        }
        Ok(clamped)
    }

    /// Apply one due event to the network configuration. Faults stamp and
    /// unstamp the configured shunt on the bus diagonal, line changes adjust
    /// the branch's series admittance, and load steps rescale the
    /// constant-impedance load so the drawn power at the pre-event voltage
    /// rises by the payload.
    pub fn apply_event(&mut self, e: &Event) -> Result<()> {
        match (e.kind, e.target) {
            (EventKind::BusFaultApply, EventTarget::Bus(b)) => {
                *self.fault_y.entry(b).or_insert_with(Complex64::zero) += e.payload;
            }
            (EventKind::BusFaultClear, EventTarget::Bus(b)) => {
                match self.fault_y.remove(&b) {
                    Some(y) => {
                        let rem = y - e.payload;
                        if !rem.is_zero() {
                            self.fault_y.insert(b, rem);
                        }
                    }
                    None => {
                        return Err(Error::UnknownTarget(format!(
                            "no fault to clear at bus {}",
                            b + 1
                        )))
                    }
                }
            }
            (EventKind::LineChange, EventTarget::Branch(i)) => {
                self.series_delta[i] += e.payload;
            }
            (EventKind::LoadStep, EventTarget::Bus(b)) => {
                // rescale so the drawn power at the pre-event voltage rises
                // by the payload
                let v = self.dec.v_bus[b];
                self.load_y[b] += e.payload.conj() / v.norm_sqr();
            }
            (kind, target) => {
                return Err(Error::UnknownTarget(format!("{kind:?} cannot target {target:?}")))
            }
        }
        Ok(())
    }

    fn record(
        result: &mut TimeSeriesResult,
        t: f64,
        dec: &PathState,
        mono: &Option<PathState>,
        iterations: usize,
        clamped: bool,
    ) {
        result.times.push(t);
        result.bus_v.push(dec.v_bus.clone());
        result.machine_states.push(dec.machines.clone());
        result.gfm_states.push(dec.gfm_x.clone());
        result.iterations.push(iterations);
        result.clamped.push(clamped);
        if let (Some(bv), Some(ms)) = (result.bench_v.as_mut(), mono.as_ref()) {
            bv.push(ms.v_bus.clone());
        }
    }

    /// Run the scenario to the horizon. Requires [`Engine::initialize`].
    pub fn run(
        mut self,
        exec: &dyn ParallelMap,
        clock: &dyn Clock,
    ) -> Result<(TimeSeriesResult, ConvergenceLog)> {
        if !self.initialized {
            return Err(Error::Validation("engine must be initialized before run".into()));
        }
        let mut result = TimeSeriesResult {
            machine_buses: self.machines.iter().map(|(m, _)| m.bus).collect(),
            gfm_buses: self.gfms.iter().map(|g| g.bus).collect(),
            bench_v: self.spec.benchmark.then(Vec::new),
            ..TimeSeriesResult::default()
        };
        let mut log = ConvergenceLog::default();

        let mut t = 0.0f64;
        let mut last_disturbance = f64::NEG_INFINITY;
        let mut next_event = 0usize;
        let events = self.spec.events.clone();

        // initial converged sample at t = 0
        let t0 = clock.now();
        let (it0, mis0) = self.solve_decomposed(exec, t)?;
        if let Some(mut mono) = self.mono.take() {
            mono.v_bus = self.solve_monolithic(&mono)?;
            self.mono = Some(mono);
        }
        Self::record(&mut result, t, &self.dec, &self.mono, it0, false);
        log.steps.push(StepLog {
            t,
            iterations: it0,
            mismatches: mis0,
            wall_device: 0.0,
            wall_solve: clock.now() - t0,
            wall_bench: 0.0,
        });

        while t < self.spec.horizon - 1e-9 {
            // apply due events, then re-solve the algebraic state at t
            let mut disturbed = false;
            while next_event < events.len() && events[next_event].time <= t + 1e-9 {
                let e = events[next_event];
                self.apply_event(&e)?;
                next_event += 1;
                disturbed = true;
            }
            if disturbed {
                last_disturbance = t;
                let ts = clock.now();
                self.rebuild_solvers().map_err(|e| Error::MidRun {
                    t,
                    detail: alloc::format!("{e}"),
                })?;
                let (iters, mism) = self.solve_decomposed(exec, t)?;
                let ts2 = clock.now();
                if self.spec.benchmark {
                    let mono = self.mono.as_ref().expect("benchmark state");
                    let v = self.solve_monolithic(mono)?;
                    self.mono.as_mut().expect("benchmark state").v_bus = v;
                }
                let ts3 = clock.now();
                Self::record(&mut result, t, &self.dec, &self.mono, iters, false);
                log.steps.push(StepLog {
                    t,
                    iterations: iters,
                    mismatches: mism,
                    wall_device: 0.0,
                    wall_solve: ts2 - ts,
                    wall_bench: ts3 - ts2,
                });
            }

            let next_time = events.get(next_event).map(|e| e.time);
            let mut h = step_size_at(&self.spec.schedule, t, last_disturbance, next_time);
            h = h.min(self.spec.horizon - t);

            let tw0 = clock.now();
            let clamped = Self::advance_path(
                &self.machines,
                &self.gfms,
                &self.spec,
                &mut self.dec,
                t,
                h,
            )?;
            if let Some(mono) = self.mono.as_mut() {
                Self::advance_path(&self.machines, &self.gfms, &self.spec, mono, t, h)?;
            }
            let tw1 = clock.now();

            t += h;
            // land exactly on event boundaries and the horizon
            if let Some(te) = next_time {
                if (t - te).abs() < 1e-9 {
                    t = te;
                }
            }
            if (t - self.spec.horizon).abs() < 1e-9 {
                t = self.spec.horizon;
            }

            let (iters, mism) = self.solve_decomposed(exec, t)?;
            let tw2 = clock.now();
            if self.spec.benchmark {
                let mono = self.mono.as_ref().expect("benchmark state");
                let v = self.solve_monolithic(mono)?;
                self.mono.as_mut().expect("benchmark state").v_bus = v;
            }
            let tw3 = clock.now();

            Self::record(&mut result, t, &self.dec, &self.mono, iters, clamped);
            log.steps.push(StepLog {
                t,
                iterations: iters,
                mismatches: mism,
                wall_device: tw1 - tw0,
                wall_solve: tw2 - tw1,
                wall_bench: tw3 - tw2,
            });
        }
        Ok((result, log))
    }
}
