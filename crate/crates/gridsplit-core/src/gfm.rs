//! Grid-forming inverter small-signal model with virtual-admittance control.
//!
//! The model is thirteen first-order linear ODEs in SI units on the device
//! base, assembled from the filter circuit, the Park/inverse-Park frame
//! transformations, the d/q current control loops, the power low-pass
//! filters, the P/Q droop laws, and the virtual-admittance current-reference
//! dynamics. Symbol map, state vector then inputs:
//!
//! | idx | state        | meaning                                   |
//! |-----|--------------|-------------------------------------------|
//! | 0   | di_gd        | grid current, d (A)                        |
//! | 1   | di_gq        | grid current, q (A)                        |
//! | 2   | dv_cd        | filter capacitor voltage, d (V)            |
//! | 3   | dv_cq        | filter capacitor voltage, q (V)            |
//! | 4   | di_ld        | converter-side inductor current, d (A)     |
//! | 5   | di_lq        | converter-side inductor current, q (A)     |
//! | 6   | dint_id      | d current-loop integrator (A·s)            |
//! | 7   | dint_iq      | q current-loop integrator (A·s)            |
//! | 8   | di_ld_ref    | current reference, d (A)                   |
//! | 9   | di_lq_ref    | current reference, q (A)                   |
//! | 10  | dp_lpf       | filtered active power (W)                  |
//! | 11  | dtheta_ps    | control-frame angle offset (rad)           |
//! | 12  | dq_lpf       | filtered reactive power (var)              |
//!
//! Inputs: `[dv_gd (V), dv_gq (V), dp_ref (W), dq_ref (var)]`.
//!
//! Parameters cover the filter (`r_f`, `l_f`, `c_f`), the grid-side branch
//! (`r_g`, `l_g`), the virtual admittance (`r_v`, `l_v`), the current-loop
//! gains (`kp_id`, `ki_id`, `kp_iq`, `ki_iq`), the measurement filter cutoff
//! (`w_lpf`), the droop gains (`m_p`, `n_q`), the frame frequency (`w1`),
//! and the operating point (`i_gd0`…`v_cmd_q0`). Every coefficient of the
//! governing equations appears in exactly one of these fields.

use alloc::vec;
use alloc::vec::Vec;
use nalgebra::DMatrix;
use num_complex::Complex64;
use num_traits::Float;

use crate::error::{Error, Result};

pub const N_STATES: usize = 13;
pub const N_INPUTS: usize = 4;

/// State vector indices.
pub mod state {
    pub const I_GD: usize = 0;
    pub const I_GQ: usize = 1;
    pub const V_CD: usize = 2;
    pub const V_CQ: usize = 3;
    pub const I_LD: usize = 4;
    pub const I_LQ: usize = 5;
    pub const INT_ID: usize = 6;
    pub const INT_IQ: usize = 7;
    pub const I_LD_REF: usize = 8;
    pub const I_LQ_REF: usize = 9;
    pub const P_LPF: usize = 10;
    pub const THETA_PS: usize = 11;
    pub const Q_LPF: usize = 12;
}

/// Input vector indices.
pub mod input {
    pub const V_GD: usize = 0;
    pub const V_GQ: usize = 1;
    pub const P_REF: usize = 2;
    pub const Q_REF: usize = 3;
}

/// Converter parameters in SI units on the device's own base.
#[derive(Debug, Clone, Copy, PartialEq)]
pub struct GfmParams {
    pub r_f: f64,
    pub l_f: f64,
    pub c_f: f64,
    pub r_g: f64,
    pub l_g: f64,
    pub r_v: f64,
    pub l_v: f64,
    pub kp_id: f64,
    pub ki_id: f64,
    pub kp_iq: f64,
    pub ki_iq: f64,
    pub w_lpf: f64,
    /// Active-power droop (rad/s per W).
    pub m_p: f64,
    /// Reactive-power droop (V per var).
    pub n_q: f64,
    /// Nominal frame frequency (rad/s).
    pub w1: f64,
    /// Apparent-power rating (VA).
    pub s_rating: f64,
    // operating point
    pub i_gd0: f64,
    pub i_gq0: f64,
    pub i_ld0: f64,
    pub i_lq0: f64,
    pub v_cd0: f64,
    pub v_cq0: f64,
    /// Bridge-voltage command operating point, d axis (V).
    pub v_cmd_d0: f64,
    /// Bridge-voltage command operating point, q axis (V).
    pub v_cmd_q0: f64,
}

impl GfmParams {
    pub fn validate(&self) -> Result<()> {
        if self.l_f > 0.0 && self.c_f > 0.0 && self.l_g > 0.0 && self.l_v > 0.0
            && self.w_lpf > 0.0 && self.w1 > 0.0
        {
            Ok(())
        } else {
            Err(Error::Validation("GFM filter/virtual inductances, LPF cutoff and w1 must be positive".into()))
        }
    }

    /// Apply the zero-power operating condition: all current operating
    /// points zero, capacitor and command voltages at the rated phase peak.
    pub fn with_zero_power_op(mut self, v_phase_peak: f64) -> Self {
        self.i_gd0 = 0.0;
        self.i_gq0 = 0.0;
        self.i_ld0 = 0.0;
        self.i_lq0 = 0.0;
        self.v_cd0 = v_phase_peak;
        self.v_cq0 = 0.0;
        self.v_cmd_d0 = v_phase_peak;
        self.v_cmd_q0 = 0.0;
        self
    }
}

/// Dense state-space matrices of the converter: dx/dt = A x + B u.
#[derive(Debug, Clone, PartialEq)]
pub struct GfmStateSpace {
    pub a: Vec<[f64; N_STATES]>,
    pub b: Vec<[f64; N_INPUTS]>,
}

/// Linear functional over the stacked (state, input) vector; used to chain
/// the algebraic signal path into matrix rows.
#[derive(Clone, Copy)]
struct Lin {
    w: [f64; N_STATES + N_INPUTS],
}

impl Lin {
    fn zero() -> Self {
        Self { w: [0.0; N_STATES + N_INPUTS] }
    }
    fn state(i: usize) -> Self {
        let mut l = Self::zero();
        l.w[i] = 1.0;
        l
    }
    fn input(i: usize) -> Self {
        let mut l = Self::zero();
        l.w[N_STATES + i] = 1.0;
        l
    }
    fn scaled(mut self, c: f64) -> Self {
        for w in &mut self.w {
            *w *= c;
        }
        self
    }
    fn plus(mut self, o: Lin) -> Self {
        for (a, b) in self.w.iter_mut().zip(o.w.iter()) {
            *a += b;
        }
        self
    }
    fn minus(self, o: Lin) -> Self {
        self.plus(o.scaled(-1.0))
    }
}

/// Assemble the A (13x13) and B (13x4) matrices for `p`.
pub fn build_state_space(p: &GfmParams) -> Result<GfmStateSpace> {
    p.validate()?;
    use input::*;
    use state::*;
    let s = Lin::state;
    let u = Lin::input;
    let w1 = p.w1;

    // frame transforms into the control frame
    let v_cd_c = s(V_CD).plus(s(THETA_PS).scaled(p.v_cq0));
    let v_cq_c = s(V_CQ).minus(s(THETA_PS).scaled(p.v_cd0));
    let i_gd_c = s(I_GD).plus(s(THETA_PS).scaled(p.i_gq0));
    let i_gq_c = s(I_GQ).minus(s(THETA_PS).scaled(p.i_gd0));
    let i_ld_c = s(I_LD).plus(s(THETA_PS).scaled(p.i_lq0));
    let i_lq_c = s(I_LQ).minus(s(THETA_PS).scaled(p.i_ld0));

    // current-loop errors and voltage commands (control frame)
    let e_d = s(I_LD_REF).minus(i_ld_c);
    let e_q = s(I_LQ_REF).minus(i_lq_c);
    let v_cmd_d_c = e_d
        .scaled(p.kp_id)
        .plus(s(INT_ID).scaled(p.ki_id))
        .minus(i_lq_c.scaled(w1 * p.l_f));
    let v_cmd_q_c = e_q
        .scaled(p.kp_iq)
        .plus(s(INT_IQ).scaled(p.ki_iq))
        .minus(i_ld_c.scaled(w1 * p.l_f));

    // back to the grid frame
    let v_cmd_d = v_cmd_d_c.minus(s(THETA_PS).scaled(p.v_cmd_q0));
    let v_cmd_q = v_cmd_q_c.plus(s(THETA_PS).scaled(p.v_cmd_d0));

    // instantaneous power deviations (control-frame signals)
    let dp = v_cd_c
        .scaled(1.5 * p.i_gd0)
        .plus(v_cq_c.scaled(1.5 * p.i_gq0))
        .plus(i_gd_c.scaled(1.5 * p.v_cd0))
        .plus(i_gq_c.scaled(1.5 * p.v_cq0));
    let dq = v_cd_c
        .scaled(-1.5 * p.i_gq0)
        .plus(v_cq_c.scaled(1.5 * p.i_gd0))
        .plus(i_gd_c.scaled(1.5 * p.v_cq0))
        .plus(i_gq_c.scaled(1.5 * p.v_cd0));

    // voltage-magnitude droop output
    let de = u(Q_REF).minus(s(Q_LPF)).scaled(p.n_q);

    let mut rows = [Lin::zero(); N_STATES];
    rows[I_GD] = s(V_CD)
        .minus(u(V_GD))
        .minus(s(I_GD).scaled(p.r_g))
        .scaled(1.0 / p.l_g)
        .plus(s(I_GQ).scaled(w1));
    rows[I_GQ] = s(V_CQ)
        .minus(u(V_GQ))
        .minus(s(I_GQ).scaled(p.r_g))
        .scaled(1.0 / p.l_g)
        .minus(s(I_GD).scaled(w1));
    rows[V_CD] = s(I_LD)
        .minus(s(I_GD))
        .scaled(1.0 / p.c_f)
        .plus(s(V_CQ).scaled(w1));
    rows[V_CQ] = s(I_LQ)
        .minus(s(I_GQ))
        .scaled(1.0 / p.c_f)
        .minus(s(V_CD).scaled(w1));
    rows[I_LD] = v_cmd_d
        .minus(s(V_CD))
        .minus(s(I_LD).scaled(p.r_f))
        .scaled(1.0 / p.l_f)
        .plus(s(I_LQ).scaled(w1));
    rows[I_LQ] = v_cmd_q
        .minus(s(V_CQ))
        .minus(s(I_LQ).scaled(p.r_f))
        .scaled(1.0 / p.l_f)
        .minus(s(I_LD).scaled(w1));
    rows[INT_ID] = e_d;
    rows[INT_IQ] = e_q;
    rows[I_LD_REF] = de
        .minus(v_cd_c)
        .minus(s(I_LD_REF).scaled(p.r_v))
        .scaled(1.0 / p.l_v)
        .plus(s(I_LQ_REF).scaled(w1));
    rows[I_LQ_REF] = v_cq_c
        .scaled(-1.0)
        .minus(s(I_LQ_REF).scaled(p.r_v))
        .scaled(1.0 / p.l_v)
        .minus(s(I_LD_REF).scaled(w1));
    rows[P_LPF] = dp.minus(s(P_LPF)).scaled(p.w_lpf);
    rows[THETA_PS] = u(P_REF).minus(s(P_LPF)).scaled(p.m_p);
    rows[Q_LPF] = dq.minus(s(Q_LPF)).scaled(p.w_lpf);

    let mut a = vec![[0.0; N_STATES]; N_STATES];
    let mut b = vec![[0.0; N_INPUTS]; N_STATES];
    for (i, row) in rows.iter().enumerate() {
        a[i].copy_from_slice(&row.w[..N_STATES]);
        b[i].copy_from_slice(&row.w[N_STATES..]);
    }
    Ok(GfmStateSpace { a, b })
}

/// dx/dt = A x + B u.
pub fn derivative(ss: &GfmStateSpace, x: &[f64], u: &[f64]) -> Result<Vec<f64>> {
    if x.len() != N_STATES || u.len() != N_INPUTS {
        return Err(Error::Shape(alloc::format!(
            "expected 13-state / 4-input vectors, got {}/{}",
            x.len(),
            u.len()
        )));
    }
    let mut dx = vec![0.0; N_STATES];
    for i in 0..N_STATES {
        let mut acc = 0.0;
        for j in 0..N_STATES {
            acc += ss.a[i][j] * x[j];
        }
        for j in 0..N_INPUTS {
            acc += ss.b[i][j] * u[j];
        }
        dx[i] = acc;
    }
    Ok(dx)
}

/// Eigenvalues with real part above this resolution floor count against
/// stability. The threshold absorbs eigensolver backward error (order
/// eps * |A|, with |A| ~ 1e6 for realistic parameter sets); it sits several
/// orders below the slowest genuine mode of the bundled parameters.
pub const STABILITY_TOL: f64 = 1e-6;

/// All thirteen eigenvalues of A plus a stability verdict
/// (every real part below [`STABILITY_TOL`]).
pub fn eigen_stability(ss: &GfmStateSpace) -> Result<(Vec<Complex64>, bool)> {
    let a = DMatrix::from_fn(N_STATES, N_STATES, |i, j| ss.a[i][j]);
    if a.iter().any(|v| !v.is_finite()) {
        return Err(Error::Shape("non-finite entry in A".into()));
    }
    let ev = a.complex_eigenvalues();
    let mut out: Vec<Complex64> = ev.iter().map(|c| Complex64::new(c.re, c.im)).collect();
    out.sort_by(|p, q| {
        p.re.partial_cmp(&q.re)
            .unwrap_or(core::cmp::Ordering::Equal)
            .then(p.im.partial_cmp(&q.im).unwrap_or(core::cmp::Ordering::Equal))
    });
    let stable = out.iter().all(|l| l.re < STABILITY_TOL);
    Ok((out, stable))
}

/// Description of a multi-module aggregate.
#[derive(Debug, Clone, Copy, PartialEq)]
pub struct AggregateSpec {
    pub n_modules: usize,
    /// Per-module rating (VA).
    pub module_rating: f64,
    /// System base (VA).
    pub system_base: f64,
    pub transformer_count: usize,
}

impl AggregateSpec {
    pub fn aggregate_rating(&self) -> f64 {
        self.n_modules as f64 * self.module_rating
    }
}

/// Parallel-module reduction: `n` identical modules collapse to one
/// equivalent converter. Impedances and per-ampere/per-watt gains divide by
/// n, the filter capacitance and the rating multiply by n; per-unit dynamics
/// on the aggregate base match a single module on its own base.
pub fn aggregate(spec: &AggregateSpec, module: &GfmParams) -> GfmParams {
    let n = spec.n_modules as f64;
    let mut p = *module;
    p.r_f /= n;
    p.l_f /= n;
    p.r_g /= n;
    p.l_g /= n;
    p.r_v /= n;
    p.l_v /= n;
    p.kp_id /= n;
    p.ki_id /= n;
    p.kp_iq /= n;
    p.ki_iq /= n;
    p.m_p /= n;
    p.n_q /= n;
    p.c_f *= n;
    p.s_rating *= n;
    p
}

/// Coupling between the SI-unit converter model and the per-unit network.
///
/// The anchor is the network state at initialization: `i0`/`v0` are the
/// bus injection and voltage phasors (pu) and `theta_ref` aligns the device
/// d axis with the initial bus voltage. Deviation states then ride on top
/// of the anchor.
#[derive(Debug, Clone, Copy, PartialEq)]
pub struct GfmInterface {
    /// Bus current injection at t = 0 (pu).
    pub i0: Complex64,
    /// Bus voltage at t = 0 (pu).
    pub v0: Complex64,
    /// Frame rotation between device dq and the network phasor frame (rad).
    pub theta_ref: f64,
    /// Device voltage base: rated phase-peak volts per 1 pu.
    pub v_base: f64,
    /// Device current base (A peak) matching the system MVA base.
    pub i_base: f64,
}

impl GfmInterface {
    pub fn new(i0: Complex64, v0: Complex64, v_phase_peak: f64, system_base_va: f64) -> Self {
        Self {
            i0,
            v0,
            theta_ref: v0.arg(),
            v_base: v_phase_peak,
            i_base: 2.0 * system_base_va / (3.0 * v_phase_peak),
        }
    }

    fn rotor(&self) -> Complex64 {
        Complex64::new(Float::cos(self.theta_ref), Float::sin(self.theta_ref))
    }

    /// Norton injection for the network solve: total grid current as a pure
    /// current source (the converter's grid branch dynamics live in the
    /// state model, so the shunt term is zero).
    pub fn injection(&self, x: &[f64]) -> (Complex64, Complex64) {
        let di = Complex64::new(x[state::I_GD], x[state::I_GQ]) / self.i_base;
        (self.i0 + di * self.rotor(), Complex64::new(0.0, 0.0))
    }

    /// Grid-voltage input (SI volts, device frame) for a solved bus voltage.
    pub fn grid_input(&self, v_bus: Complex64) -> (f64, f64) {
        let dv = (v_bus - self.v0) * self.rotor().conj() * self.v_base;
        (dv.re, dv.im)
    }
}

/// Clamp the current-reference states to `i_max_pu` on the device base.
/// Returns true when the limiter engaged.
pub fn clamp_current_refs(x: &mut [f64], i_max_pu: f64, i_base: f64) -> bool {
    let mag = Float::hypot(x[state::I_LD_REF], x[state::I_LQ_REF]);
    let limit = i_max_pu * i_base;
    if mag > limit {
        let k = limit / mag;
        x[state::I_LD_REF] *= k;
        x[state::I_LQ_REF] *= k;
        true
    } else {
        false
    }
}
