//! Classical synchronous machine: constant EMF behind transient reactance,
//! swing dynamics, and a first-order droop governor.

use num_complex::Complex64;
use num_traits::Float;

/// Machine constants. `damping` multiplies the speed deviation in rad/s, so
/// a conventional per-unit-speed damping coefficient divides by omega_s.
#[derive(Debug, Clone, Copy, PartialEq)]
pub struct MachineParams {
    /// Inertia constant on the system base (s).
    pub inertia_h: f64,
    /// Damping coefficient (pu per rad/s of speed deviation).
    pub damping: f64,
    /// Synchronous speed (rad/s).
    pub omega_s: f64,
    /// Governor time constant (s).
    pub tau_g: f64,
    /// Governor droop (fraction; 0.01 = 1%).
    pub droop: f64,
    /// Mechanical power reference (pu).
    pub p_m_ref: f64,
    /// Transient reactance (pu).
    pub xd_p: f64,
}

impl MachineParams {
    pub fn valid(&self) -> bool {
        self.inertia_h > 0.0 && self.tau_g > 0.0 && self.droop > 0.0 && self.xd_p > 0.0
    }
}

/// Machine dynamic state.
#[derive(Debug, Clone, Copy, PartialEq)]
pub struct MachineState {
    /// Rotor angle (rad, network reference frame).
    pub delta: f64,
    /// Rotor speed (rad/s).
    pub omega: f64,
    /// Mechanical power (pu).
    pub p_m: f64,
    /// Internal EMF magnitude (pu, constant).
    pub e_mag: f64,
}

impl MachineState {
    /// Internal EMF phasor E' at angle delta.
    pub fn emf(&self) -> Complex64 {
        Complex64::new(self.e_mag * Float::cos(self.delta), self.e_mag * Float::sin(self.delta))
    }

    pub fn to_vec(&self) -> [f64; 3] {
        [self.delta, self.omega, self.p_m]
    }

    pub fn from_vec(v: &[f64], e_mag: f64) -> Self {
        Self { delta: v[0], omega: v[1], p_m: v[2], e_mag }
    }
}

/// Norton equivalent of the machine for the network solve: injected current
/// E'/(jx'd) together with the shunt 1/(jx'd) stamped on its bus.
pub fn norton(params: &MachineParams, state: &MachineState) -> (Complex64, Complex64) {
    let y = Complex64::new(0.0, -1.0 / params.xd_p); // 1/(j x'd)
    (state.emf() * y, y)
}

/// Air-gap electrical power for a terminal voltage `v` (pu).
pub fn electrical_power(params: &MachineParams, state: &MachineState, v: Complex64) -> f64 {
    let i = (state.emf() - v) * Complex64::new(0.0, -1.0 / params.xd_p);
    (state.emf() * i.conj()).re
}

/// Swing and governor derivatives: (d delta/dt, d omega/dt, d P_m/dt).
pub fn swing_derivative(m: &MachineParams, s: &MachineState, p_e: f64) -> (f64, f64, f64) {
    let dw = s.omega - m.omega_s;
    let d_delta = dw;
    let d_omega = m.omega_s / (2.0 * m.inertia_h) * (s.p_m - p_e - m.damping * dw);
    let d_pm = (m.p_m_ref - s.p_m - (1.0 / m.droop) * dw / m.omega_s) / m.tau_g;
    (d_delta, d_omega, d_pm)
}
