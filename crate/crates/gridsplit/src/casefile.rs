//! Case-file ingestion and serialization.
//!
//! The format is three whitespace-delimited tables with named header rows
//! (`[BUS]`, `[BRANCH]`, `[GEN]`) plus one key-value block per device
//! (`[gfm <name>]`, `[machine <name>]`). `#` starts a comment; encoding is
//! UTF-8. Powers are entered in MW/Mvar and converted to per-unit on
//! `base_mva` during ingestion; impedances are already per-unit.

use std::collections::BTreeMap;
use std::fs;
use std::path::Path;

use gridsplit_core::engine::{Devices, GfmSpec, MachineSpec};
use gridsplit_core::gfm::GfmParams;
use gridsplit_core::machine::MachineParams;
use gridsplit_core::net::{Branch, Bus, BusKind, DeviceKind, Generator, PowerFlowCase};
use num_complex::Complex64;

use crate::error::{CliError, Result};

/// A parsed case: the network plus instantiated device specifications.
#[derive(Debug, Clone)]
pub struct CaseFile {
    pub case: PowerFlowCase,
    pub devices: Devices,
    /// Raw device parameter blocks, kept for serialization and sweeps.
    pub blocks: BTreeMap<String, DeviceBlock>,
}

#[derive(Debug, Clone)]
pub struct DeviceBlock {
    pub kind: DeviceKind,
    pub keys: Vec<(String, f64)>,
}

impl DeviceBlock {
    pub fn get(&self, key: &str) -> Option<f64> {
        self.keys.iter().find(|(k, _)| k == key).map(|(_, v)| *v)
    }
}

fn parse_err(path: &str, line: usize, msg: impl Into<String>) -> CliError {
    CliError::Parse { path: path.into(), line, msg: msg.into() }
}

struct Table {
    header: Vec<String>,
    rows: Vec<(usize, Vec<String>)>,
}

impl Table {
    fn col(&self, path: &str, name: &str) -> Result<usize> {
        self.header
            .iter()
            .position(|h| h.eq_ignore_ascii_case(name))
            .ok_or_else(|| parse_err(path, 0, format!("missing column '{name}'")))
    }
}

fn f64_field(path: &str, line: usize, fields: &[String], idx: usize) -> Result<f64> {
    fields
        .get(idx)
        .ok_or_else(|| parse_err(path, line, "missing field"))?
        .parse::<f64>()
        .map_err(|_| parse_err(path, line, format!("bad number '{}'", fields[idx])))
}

pub fn parse_case(text: &str, path: &str) -> Result<CaseFile> {
    let mut base_mva = None;
    let mut frequency = 60.0;
    let mut tables: BTreeMap<String, Table> = BTreeMap::new();
    let mut blocks: BTreeMap<String, DeviceBlock> = BTreeMap::new();
    let mut section: Option<String> = None;
    let mut block: Option<String> = None;

    for (lineno, raw) in text.lines().enumerate() {
        let line = lineno + 1;
        let content = raw.split('#').next().unwrap_or("").trim();
        if content.is_empty() {
            continue;
        }
        if content.starts_with('[') && content.ends_with(']') {
            let inner = &content[1..content.len() - 1];
            let lower = inner.to_ascii_lowercase();
            if let Some(name) = lower.strip_prefix("gfm ").or(lower.strip_prefix("machine ")) {
                let kind = if lower.starts_with("gfm") { DeviceKind::Gfm } else { DeviceKind::Machine };
                blocks.insert(
                    name.trim().to_string(),
                    DeviceBlock { kind, keys: Vec::new() },
                );
                block = Some(name.trim().to_string());
                section = None;
            } else if ["bus", "branch", "gen"].contains(&lower.as_str()) {
                tables.insert(lower.clone(), Table { header: Vec::new(), rows: Vec::new() });
                section = Some(lower);
                block = None;
            } else {
                return Err(parse_err(path, line, format!("unknown section '{inner}'")));
            }
            continue;
        }
        if let Some(name) = &block {
            let (k, v) = content
                .split_once('=')
                .ok_or_else(|| parse_err(path, line, "expected 'key = value'"))?;
            let value: f64 = v
                .trim()
                .parse()
                .map_err(|_| parse_err(path, line, format!("bad number '{}'", v.trim())))?;
            blocks
                .get_mut(name)
                .expect("block exists")
                .keys
                .push((k.trim().to_string(), value));
            continue;
        }
        if let Some(sec) = &section {
            let t = tables.get_mut(sec).expect("table exists");
            let fields: Vec<String> = content.split_whitespace().map(String::from).collect();
            if t.header.is_empty() {
                t.header = fields;
            } else {
                if fields.len() != t.header.len() {
                    return Err(parse_err(
                        path,
                        line,
                        format!("expected {} fields, found {}", t.header.len(), fields.len()),
                    ));
                }
                t.rows.push((line, fields));
            }
            continue;
        }
        // top-level key = value
        let (k, v) = content
            .split_once('=')
            .ok_or_else(|| parse_err(path, line, "expected 'key = value'"))?;
        match k.trim() {
            "base_mva" => {
                base_mva = Some(v.trim().parse::<f64>().map_err(|_| {
                    parse_err(path, line, format!("bad base_mva '{}'", v.trim()))
                })?)
            }
            "frequency" => {
                frequency = v.trim().parse::<f64>().map_err(|_| {
                    parse_err(path, line, format!("bad frequency '{}'", v.trim()))
                })?
            }
            other => return Err(parse_err(path, line, format!("unknown key '{other}'"))),
        }
    }

    let base_mva = base_mva.ok_or_else(|| parse_err(path, 0, "missing base_mva"))?;

    let bt = tables
        .get("bus")
        .ok_or_else(|| parse_err(path, 0, "missing [BUS] table"))?;
    let (ci, ct, cpd, cqd, cgs, cbs, ckv) = (
        bt.col(path, "id")?,
        bt.col(path, "type")?,
        bt.col(path, "Pd")?,
        bt.col(path, "Qd")?,
        bt.col(path, "Gs")?,
        bt.col(path, "Bs")?,
        bt.col(path, "baseKV")?,
    );
    let mut buses = Vec::new();
    for (line, f) in &bt.rows {
        let id = f64_field(path, *line, f, ci)? as usize;
        if id == 0 {
            return Err(parse_err(path, *line, "bus ids are 1-based"));
        }
        let kind = match f[ct].to_ascii_lowercase().as_str() {
            "slack" | "3" => BusKind::Slack,
            "pv" | "2" => BusKind::Pv,
            "pq" | "1" => BusKind::Pq,
            other => return Err(parse_err(path, *line, format!("unknown bus type '{other}'"))),
        };
        buses.push(Bus {
            id: id - 1,
            kind,
            base_kv: f64_field(path, *line, f, ckv)?,
            shunt: Complex64::new(
                f64_field(path, *line, f, cgs)? / base_mva,
                f64_field(path, *line, f, cbs)? / base_mva,
            ),
            load: Complex64::new(
                f64_field(path, *line, f, cpd)? / base_mva,
                f64_field(path, *line, f, cqd)? / base_mva,
            ),
        });
    }

    let rt = tables
        .get("branch")
        .ok_or_else(|| parse_err(path, 0, "missing [BRANCH] table"))?;
    let (cf, cto, cr, cx, cb, cs) = (
        rt.col(path, "from")?,
        rt.col(path, "to")?,
        rt.col(path, "r")?,
        rt.col(path, "x")?,
        rt.col(path, "b")?,
        rt.col(path, "status")?,
    );
    let mut branches = Vec::new();
    for (line, f) in &rt.rows {
        branches.push(Branch {
            from: f64_field(path, *line, f, cf)? as usize - 1,
            to: f64_field(path, *line, f, cto)? as usize - 1,
            r: f64_field(path, *line, f, cr)?,
            x: f64_field(path, *line, f, cx)?,
            charging: f64_field(path, *line, f, cb)?,
            in_service: f64_field(path, *line, f, cs)? != 0.0,
        });
    }

    let gt = tables
        .get("gen")
        .ok_or_else(|| parse_err(path, 0, "missing [GEN] table"))?;
    let (cb_, cpg, cqg, cvg, ck, cp) = (
        gt.col(path, "bus")?,
        gt.col(path, "Pg")?,
        gt.col(path, "Qg")?,
        gt.col(path, "Vg")?,
        gt.col(path, "kind")?,
        gt.col(path, "params")?,
    );
    let mut generators = Vec::new();
    for (line, f) in &gt.rows {
        let kind = match f[ck].to_ascii_lowercase().as_str() {
            "gfm" => DeviceKind::Gfm,
            "machine" => DeviceKind::Machine,
            other => return Err(parse_err(path, *line, format!("unknown device kind '{other}'"))),
        };
        generators.push(Generator {
            bus: f64_field(path, *line, f, cb_)? as usize - 1,
            kind,
            params: f[cp].clone(),
            pg: f64_field(path, *line, f, cpg)? / base_mva,
            qg: f64_field(path, *line, f, cqg)? / base_mva,
            vg: f64_field(path, *line, f, cvg)?,
        });
    }

    let case = PowerFlowCase { buses, branches, generators, base_mva, frequency_hz: frequency }
        .validate()
        .map_err(CliError::Core)?;
    let devices = instantiate_devices(&case, &blocks, path)?;
    Ok(CaseFile { case, devices, blocks })
}

fn block_key(b: &DeviceBlock, path: &str, name: &str, key: &str) -> Result<f64> {
    b.get(key)
        .ok_or_else(|| parse_err(path, 0, format!("device block '{name}' is missing key '{key}'")))
}

fn instantiate_devices(
    case: &PowerFlowCase,
    blocks: &BTreeMap<String, DeviceBlock>,
    path: &str,
) -> Result<Devices> {
    let w1 = case.omega_s();
    let mut devices = Devices::default();
    for g in &case.generators {
        let b = blocks.get(&g.params).ok_or_else(|| {
            parse_err(path, 0, format!("generator at bus {} references unknown block '{}'", g.bus + 1, g.params))
        })?;
        if b.kind != g.kind {
            return Err(parse_err(
                path,
                0,
                format!("block '{}' kind does not match generator kind", g.params),
            ));
        }
        match g.kind {
            DeviceKind::Machine => {
                devices.machines.push(MachineSpec {
                    bus: g.bus,
                    params: MachineParams {
                        inertia_h: block_key(b, path, &g.params, "H")?,
                        damping: b.get("D").unwrap_or(0.0),
                        omega_s: w1,
                        tau_g: block_key(b, path, &g.params, "tau_g")?,
                        droop: block_key(b, path, &g.params, "dp")?,
                        p_m_ref: 0.0,
                        xd_p: block_key(b, path, &g.params, "xd_p")?,
                    },
                    p_m_ref_override: None,
                });
            }
            DeviceKind::Gfm => {
                let v_mod = b.get("v_mod").unwrap_or(400.0);
                let v_pk = v_mod * (2.0f64 / 3.0).sqrt();
                let s_r = block_key(b, path, &g.params, "S_r")?;
                let module = GfmParams {
                    r_f: block_key(b, path, &g.params, "R_f")?,
                    l_f: block_key(b, path, &g.params, "L_f")?,
                    c_f: block_key(b, path, &g.params, "C_f")?,
                    r_g: block_key(b, path, &g.params, "R_g")?,
                    l_g: block_key(b, path, &g.params, "L_g")?,
                    r_v: block_key(b, path, &g.params, "R_v")?,
                    l_v: block_key(b, path, &g.params, "L_v")?,
                    kp_id: block_key(b, path, &g.params, "Kp_id")?,
                    ki_id: block_key(b, path, &g.params, "Ki_id")?,
                    kp_iq: block_key(b, path, &g.params, "Kp_iq")?,
                    ki_iq: block_key(b, path, &g.params, "Ki_iq")?,
                    w_lpf: block_key(b, path, &g.params, "w_lpf")?,
                    m_p: block_key(b, path, &g.params, "m_p")?,
                    n_q: block_key(b, path, &g.params, "n_q")?,
                    w1: b.get("w1").unwrap_or(w1),
                    s_rating: s_r,
                    i_gd0: 0.0,
                    i_gq0: 0.0,
                    i_ld0: 0.0,
                    i_lq0: 0.0,
                    v_cd0: v_pk,
                    v_cq0: 0.0,
                    v_cmd_d0: v_pk,
                    v_cmd_q0: 0.0,
                };
                devices.gfms.push(GfmSpec {
                    bus: g.bus,
                    module,
                    n_modules: block_key(b, path, &g.params, "n")? as usize,
                    transformer_count: b.get("transformers").unwrap_or(0.0) as usize,
                    v_phase_peak: v_pk,
                    i_clamp_pu: b.get("I_max").unwrap_or(1.1),
                });
            }
        }
    }
    Ok(devices)
}

/// Read and parse a case file from disk.
pub fn load_case(path: &Path) -> Result<CaseFile> {
    let text = fs::read_to_string(path)
        .map_err(|e| CliError::Io { path: path.display().to_string(), source: e })?;
    parse_case(&text, &path.display().to_string())
}

/// Serialize a case back to the file format. Floats use the shortest
/// round-trip representation, making load -> write -> load a fixed point.
pub fn write_case(cf: &CaseFile) -> String {
    let case = &cf.case;
    let mut out = String::new();
    out.push_str(&format!("base_mva = {}\n", case.base_mva));
    out.push_str(&format!("frequency = {}\n\n", case.frequency_hz));
    out.push_str("[BUS]\nid type Pd Qd Gs Bs baseKV\n");
    for b in &case.buses {
        let kind = match b.kind {
            BusKind::Slack => "slack",
            BusKind::Pv => "pv",
            BusKind::Pq => "pq",
        };
        out.push_str(&format!(
            "{} {} {} {} {} {} {}\n",
            b.id + 1,
            kind,
            b.load.re * case.base_mva,
            b.load.im * case.base_mva,
            b.shunt.re * case.base_mva,
            b.shunt.im * case.base_mva,
            b.base_kv
        ));
    }
    out.push_str("\n[BRANCH]\nfrom to r x b status\n");
    for br in &case.branches {
        out.push_str(&format!(
            "{} {} {} {} {} {}\n",
            br.from + 1,
            br.to + 1,
            br.r,
            br.x,
            br.charging,
            i32::from(br.in_service)
        ));
    }
    out.push_str("\n[GEN]\nbus Pg Qg Vg kind params\n");
    for g in &case.generators {
        let kind = match g.kind {
            DeviceKind::Gfm => "gfm",
            DeviceKind::Machine => "machine",
        };
        out.push_str(&format!(
            "{} {} {} {} {} {}\n",
            g.bus + 1,
            g.pg * case.base_mva,
            g.qg * case.base_mva,
            g.vg,
            kind,
            g.params
        ));
    }
    for (name, b) in &cf.blocks {
        let kind = match b.kind {
            DeviceKind::Gfm => "gfm",
            DeviceKind::Machine => "machine",
        };
        out.push_str(&format!("\n[{kind} {name}]\n"));
        for (k, v) in &b.keys {
            out.push_str(&format!("{k} = {v}\n"));
        }
    }
    out
}
