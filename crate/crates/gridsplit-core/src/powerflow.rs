//! Flat-start Gauss-Seidel power flow used only to initialize the engine.
//!
//! Bus roles come from the case: the slack bus holds its voltage setpoint at
//! angle zero, PV buses hold scheduled P and voltage magnitude, PQ buses
//! hold net scheduled power. Loads stay constant-power here; the engine
//! converts them to constant impedances at the solved point.

use alloc::vec;
use alloc::vec::Vec;
use num_complex::Complex64;
use num_traits::Zero;

use crate::error::{Error, Result};
use crate::net::{build_admittance, BusKind, PowerFlowCase};

#[derive(Debug, Clone)]
pub struct PowerFlowSolution {
    /// Bus voltages (pu).
    pub v: Vec<Complex64>,
    /// Net complex power injection per bus (generation minus load, pu).
    pub s_net: Vec<Complex64>,
    pub iterations: usize,
}

const TOL: f64 = 1e-12;
const MAX_SWEEPS: usize = 30000;

pub fn solve_flat_start(case: &PowerFlowCase) -> Result<PowerFlowSolution> {
    let n = case.n_buses();
    let y = build_admittance(case).to_dense();

    let mut pg = vec![0.0f64; n];
    let mut vg = vec![1.0f64; n];
    for g in &case.generators {
        pg[g.bus] += g.pg;
        vg[g.bus] = g.vg;
    }
    let slack = case
        .buses
        .iter()
        .position(|b| b.kind == BusKind::Slack)
        .expect("validated case has a slack bus");

    let mut v: Vec<Complex64> = case
        .buses
        .iter()
        .map(|b| match b.kind {
            BusKind::Slack | BusKind::Pv => Complex64::new(vg[b.id], 0.0),
            BusKind::Pq => Complex64::new(1.0, 0.0),
        })
        .collect();
    let mut s: Vec<Complex64> = case
        .buses
        .iter()
        .map(|b| Complex64::new(pg[b.id], 0.0) - b.load)
        .collect();

    let yv = |v: &[Complex64], i: usize| -> Complex64 {
        let mut acc = Complex64::zero();
        for j in 0..n {
            acc += y[(i, j)] * v[j];
        }
        acc
    };

    let mut sweeps = 0;
    let mut dmax = f64::INFINITY;
    while sweeps < MAX_SWEEPS {
        sweeps += 1;
        dmax = 0.0;
        for i in 0..n {
            if i == slack {
                continue;
            }
            if case.buses[i].kind == BusKind::Pv {
                let q = (v[i] * yv(&v, i).conj()).im;
                s[i] = Complex64::new(s[i].re, q);
            }
            let off = yv(&v, i) - y[(i, i)] * v[i];
            let mut vn = ((s[i] / v[i]).conj() - off) / y[(i, i)];
            if case.buses[i].kind == BusKind::Pv {
                vn = vn * (vg[i] / vn.norm());
            }
            dmax = dmax.max((vn - v[i]).norm());
            v[i] = vn;
        }
        if dmax < TOL {
            break;
        }
    }
    if !dmax.is_finite() || dmax >= TOL {
        return Err(Error::PowerFlowDiverged { residual: dmax, iters: sweeps });
    }
    // final net injections from the solved voltages
    let mut s_net = vec![Complex64::zero(); n];
    for i in 0..n {
        s_net[i] = v[i] * yv(&v, i).conj();
    }
    Ok(PowerFlowSolution { v, s_net, iterations: sweeps })
}
