//! Scenario-file parsing: simulation controls, the partition, and events.
//!
//! `key = value` lines plus one `event = <time> <kind> <target> <payload>`
//! line per disturbance. Cut edges are written `from-to` with 1-based bus
//! ids; event targets are a bus id, a 1-based branch index, or `from-to`
//! endpoints for line changes. Payloads are real or complex (`1e6`,
//! `-0.5-2.1j`).

use std::fs;
use std::path::{Path, PathBuf};

use gridsplit_core::engine::{BoundaryMode, Event, EventKind, EventTarget, ScenarioSpec};
use gridsplit_core::integrate::{IntegratorKind, StepSchedule};
use gridsplit_core::net::PowerFlowCase;
use num_complex::Complex64;

use crate::error::{CliError, Result};

#[derive(Debug, Clone)]
pub struct ScenarioFile {
    /// Case reference (path or bundled name), overridable from the CLI.
    pub case: Option<String>,
    pub subsystem_cuts: Vec<(usize, usize)>,
    pub subdomain_cuts: Vec<(usize, usize)>,
    pub events: Vec<RawEvent>,
    pub horizon: f64,
    pub sigma: f64,
    pub h_fast: f64,
    pub h_slow: f64,
    pub fast_window: f64,
    pub integrator: IntegratorKind,
    pub benchmark: bool,
    pub boundary_mode: BoundaryMode,
    pub gfm_substep: f64,
}

#[derive(Debug, Clone)]
pub struct RawEvent {
    pub time: f64,
    pub kind: EventKind,
    /// Bus id, branch index, or branch endpoints, still 1-based.
    pub target: RawTarget,
    pub payload: Complex64,
}

#[derive(Debug, Clone, Copy)]
pub enum RawTarget {
    Id(usize),
    Edge(usize, usize),
}

fn perr(path: &str, line: usize, msg: impl Into<String>) -> CliError {
    CliError::Parse { path: path.into(), line, msg: msg.into() }
}

/// Parse `a-b` into a 1-based edge pair.
fn parse_edge(s: &str) -> Option<(usize, usize)> {
    let (a, b) = s.split_once('-')?;
    Some((a.trim().parse().ok()?, b.trim().parse().ok()?))
}

/// Accepts `3`, `-1.5`, `2j`, `1e6+0j`, `-0.5-2.1j`.
pub fn parse_complex(s: &str) -> Option<Complex64> {
    let s = s.trim();
    if let Ok(re) = s.parse::<f64>() {
        return Some(Complex64::new(re, 0.0));
    }
    let body = s.strip_suffix(['j', 'J'])?;
    // split at the sign separating real and imaginary parts (skip the
    // leading sign and exponent signs)
    let bytes = body.as_bytes();
    let mut split = None;
    for i in (1..bytes.len()).rev() {
        let c = bytes[i] as char;
        if (c == '+' || c == '-') && !matches!(bytes[i - 1] as char, 'e' | 'E') {
            split = Some(i);
            break;
        }
    }
    match split {
        Some(i) => {
            let re: f64 = body[..i].parse().ok()?;
            let im_str = &body[i..];
            let im: f64 = if im_str == "+" {
                1.0
            } else if im_str == "-" {
                -1.0
            } else {
                im_str.parse().ok()?
            };
            Some(Complex64::new(re, im))
        }
        None => {
            let im: f64 = if body.is_empty() { 1.0 } else { body.parse().ok()? };
            Some(Complex64::new(0.0, im))
        }
    }
}

pub fn parse_scenario(text: &str, path: &str) -> Result<ScenarioFile> {
    let mut sf = ScenarioFile {
        case: None,
        subsystem_cuts: Vec::new(),
        subdomain_cuts: Vec::new(),
        events: Vec::new(),
        horizon: 5.0,
        sigma: 1e-8,
        h_fast: 0.01,
        h_slow: 0.05,
        fast_window: 0.5,
        integrator: IntegratorKind::Rkf45,
        benchmark: false,
        boundary_mode: BoundaryMode::Thevenin,
        gfm_substep: 1e-4,
    };
    for (lineno, raw) in text.lines().enumerate() {
        let line = lineno + 1;
        let content = raw.split('#').next().unwrap_or("").trim();
        if content.is_empty() {
            continue;
        }
        let (k, v) = content
            .split_once('=')
            .ok_or_else(|| perr(path, line, "expected 'key = value'"))?;
        let (k, v) = (k.trim(), v.trim());
        let num = |v: &str| -> Result<f64> {
            v.parse().map_err(|_| perr(path, line, format!("bad number '{v}'")))
        };
        match k {
            "case" => sf.case = Some(v.to_string()),
            "subsystem_cut" => sf.subsystem_cuts.push(
                parse_edge(v).ok_or_else(|| perr(path, line, format!("bad cut '{v}'")))?,
            ),
            "subdomain_cut" => sf.subdomain_cuts.push(
                parse_edge(v).ok_or_else(|| perr(path, line, format!("bad cut '{v}'")))?,
            ),
            "horizon" => sf.horizon = num(v)?,
            "sigma" => sf.sigma = num(v)?,
            "h_fast" => sf.h_fast = num(v)?,
            "h_slow" => sf.h_slow = num(v)?,
            "fast_window" => sf.fast_window = num(v)?,
            "gfm_substep" => sf.gfm_substep = num(v)?,
            "benchmark" => {
                sf.benchmark = match v {
                    "true" | "1" | "on" => true,
                    "false" | "0" | "off" => false,
                    other => return Err(perr(path, line, format!("bad benchmark flag '{other}'"))),
                }
            }
            "integrator" => {
                sf.integrator = parse_integrator(v)
                    .ok_or_else(|| perr(path, line, format!("unknown integrator '{v}'")))?
            }
            "boundary_g" => {
                sf.boundary_mode = match v {
                    "thevenin" => BoundaryMode::Thevenin,
                    "cut" => BoundaryMode::CutAdmittance,
                    other => return Err(perr(path, line, format!("unknown boundary_g '{other}'"))),
                }
            }
            "event" => {
                let fields: Vec<&str> = v.split_whitespace().collect();
                if fields.len() != 4 {
                    return Err(perr(path, line, "event needs: time kind target payload"));
                }
                let time = num(fields[0])?;
                let kind = match fields[1] {
                    "bus_fault_apply" => EventKind::BusFaultApply,
                    "bus_fault_clear" => EventKind::BusFaultClear,
                    "line_change" => EventKind::LineChange,
                    "load_step" => EventKind::LoadStep,
                    other => return Err(perr(path, line, format!("unknown event kind '{other}'"))),
                };
                let target = if let Some((a, b)) = parse_edge(fields[2]) {
                    RawTarget::Edge(a, b)
                } else {
                    RawTarget::Id(fields[2].parse().map_err(|_| {
                        perr(path, line, format!("bad event target '{}'", fields[2]))
                    })?)
                };
                let payload = parse_complex(fields[3])
                    .ok_or_else(|| perr(path, line, format!("bad payload '{}'", fields[3])))?;
                sf.events.push(RawEvent { time, kind, target, payload });
            }
            other => return Err(perr(path, line, format!("unknown key '{other}'"))),
        }
    }
    sf.events
        .sort_by(|a, b| a.time.partial_cmp(&b.time).unwrap_or(std::cmp::Ordering::Equal));
    Ok(sf)
}

pub fn parse_integrator(v: &str) -> Option<IntegratorKind> {
    match v {
        "modified_euler" => Some(IntegratorKind::ModifiedEuler),
        "rkf45" => Some(IntegratorKind::Rkf45),
        _ => None,
    }
}

pub fn load_scenario(path: &Path) -> Result<ScenarioFile> {
    let text = fs::read_to_string(path)
        .map_err(|e| CliError::Io { path: path.display().to_string(), source: e })?;
    parse_scenario(&text, &path.display().to_string())
}

impl ScenarioFile {
    /// Resolve raw targets against a case and produce the engine spec.
    pub fn to_spec(&self, case: &PowerFlowCase) -> Result<ScenarioSpec> {
        let to_zero_based = |cuts: &[(usize, usize)]| -> Result<Vec<(usize, usize)>> {
            cuts.iter()
                .map(|&(a, b)| {
                    if a == 0 || b == 0 {
                        Err(CliError::Input(format!("cut {a}-{b}: bus ids are 1-based")))
                    } else {
                        Ok((a - 1, b - 1))
                    }
                })
                .collect()
        };
        let mut events = Vec::with_capacity(self.events.len());
        for e in &self.events {
            let target = match (e.kind, e.target) {
                (EventKind::LineChange, RawTarget::Id(i)) => {
                    if i == 0 || i > case.branches.len() {
                        return Err(CliError::Input(format!("line_change: no branch {i}")));
                    }
                    EventTarget::Branch(i - 1)
                }
                (EventKind::LineChange, RawTarget::Edge(a, b)) => {
                    let idx = case.branch_between(a - 1, b - 1).ok_or_else(|| {
                        CliError::Input(format!("line_change: no branch between {a} and {b}"))
                    })?;
                    EventTarget::Branch(idx)
                }
                (_, RawTarget::Id(bus)) => {
                    if bus == 0 || bus > case.n_buses() {
                        return Err(CliError::Input(format!("event: no bus {bus}")));
                    }
                    EventTarget::Bus(bus - 1)
                }
                (kind, RawTarget::Edge(a, b)) => {
                    return Err(CliError::Input(format!(
                        "{kind:?} cannot target an edge {a}-{b}"
                    )))
                }
            };
            events.push(Event { time: e.time, kind: e.kind, target, payload: e.payload });
        }
        Ok(ScenarioSpec {
            subsystem_cuts: to_zero_based(&self.subsystem_cuts)?,
            subdomain_cuts: to_zero_based(&self.subdomain_cuts)?,
            events,
            horizon: self.horizon,
            sigma: self.sigma,
            schedule: StepSchedule::new(self.h_fast, self.h_slow, self.fast_window)
                .map_err(CliError::Core)?,
            integrator: self.integrator,
            benchmark: self.benchmark,
            boundary_mode: self.boundary_mode,
            gfm_substep: self.gfm_substep,
            max_relax_iters: 50,
        })
    }
}

/// Bundled data shipped with the binary, addressable by bare name.
pub mod bundled {
    pub const CASE9: &str = include_str!("../data/case9.case");
    pub const FAULT_BUS2: &str = include_str!("../data/fault_bus2.scn");
    pub const LINE6_CHANGE: &str = include_str!("../data/line6_change.scn");
    pub const LOAD_STEP_075: &str = include_str!("../data/load_step_075.scn");

    pub fn case(name: &str) -> Option<&'static str> {
        match name {
            "case9" => Some(CASE9),
            _ => None,
        }
    }

    pub fn scenario(name: &str) -> Option<&'static str> {
        match name {
            "fault_bus2" => Some(FAULT_BUS2),
            "line6_change" => Some(LINE6_CHANGE),
            "load_step_075" => Some(LOAD_STEP_075),
            _ => None,
        }
    }
}

/// Resolve a `--case`/`--scenario` argument: an existing path wins, then a
/// bundled name.
pub fn resolve_source(arg: &str, bundled: fn(&str) -> Option<&'static str>) -> Result<(String, String)> {
    let p = PathBuf::from(arg);
    if p.exists() {
        let text = fs::read_to_string(&p)
            .map_err(|e| CliError::Io { path: arg.to_string(), source: e })?;
        return Ok((text, arg.to_string()));
    }
    if let Some(text) = bundled(arg) {
        return Ok((text.to_string(), format!("bundled:{arg}")));
    }
    Err(CliError::Input(format!("'{arg}' is neither a file nor a bundled name")))
}

#[cfg(test)]
mod tests {
    use super::*;

    #[test]
    fn complex_payload_forms() {
        assert_eq!(parse_complex("1e6"), Some(Complex64::new(1e6, 0.0)));
        assert_eq!(parse_complex("1e6+0j"), Some(Complex64::new(1e6, 0.0)));
        assert_eq!(parse_complex("-0.5-2.1j"), Some(Complex64::new(-0.5, -2.1)));
        assert_eq!(parse_complex("2j"), Some(Complex64::new(0.0, 2.0)));
        assert_eq!(parse_complex("1e-3+1e-4j"), Some(Complex64::new(1e-3, 1e-4)));
        assert_eq!(parse_complex("nonsense"), None);
    }

    #[test]
    fn scenario_parses_and_sorts_events() {
        let text = "
case = case9
subsystem_cut = 1-4
subdomain_cut = 6-7
sigma = 1e-8
event = 1.4 bus_fault_clear 2 1e6
event = 1.2 bus_fault_apply 2 1e6
integrator = modified_euler
";
        let sf = parse_scenario(text, "t").unwrap();
        assert_eq!(sf.subsystem_cuts, vec![(1, 4)]);
        assert_eq!(sf.events.len(), 2);
        assert!(sf.events[0].time < sf.events[1].time);
        assert_eq!(sf.integrator, IntegratorKind::ModifiedEuler);
    }

    #[test]
    fn unknown_key_is_an_error() {
        assert!(parse_scenario("volts = 3", "t").is_err());
    }
}
