//! Fixed-step explicit integrators and the disturbance-aware step schedule.
//!
//! The engine runs a fixed macro step chosen by [`StepSchedule`]; stiff
//! device models sub-step inside a macro step but the schedule itself never
//! adapts. The embedded error estimate of the Fehlberg pair is carried for
//! diagnostics only.

use alloc::vec::Vec;

use crate::error::{Error, Result};

#[derive(Debug, Clone, Copy, PartialEq)]
pub struct StepSchedule {
    /// Step used inside `fast_window` after a disturbance (s).
    pub h_fast: f64,
    /// Step used elsewhere (s).
    pub h_slow: f64,
    /// Duration of fast stepping after each disturbance (s).
    pub fast_window: f64,
}

impl StepSchedule {
    pub fn new(h_fast: f64, h_slow: f64, fast_window: f64) -> Result<Self> {
        if h_fast.is_nan() || h_fast <= 0.0 || h_fast > h_slow || fast_window < 0.0 {
            return Err(Error::Shape(alloc::format!(
                "invalid schedule: h_fast={h_fast}, h_slow={h_slow}, fast_window={fast_window}"
            )));
        }
        Ok(Self { h_fast, h_slow, fast_window })
    }
}

impl Default for StepSchedule {
    fn default() -> Self {
        // 10 ms for half a second after each disturbance, 50 ms otherwise
        Self { h_fast: 0.01, h_slow: 0.05, fast_window: 0.5 }
    }
}

/// Step size at time `t` given the most recent disturbance, truncated so the
/// next event boundary is landed on exactly.
pub fn step_size_at(
    schedule: &StepSchedule,
    t: f64,
    last_disturbance: f64,
    next_event: Option<f64>,
) -> f64 {
    let mut h = if t - last_disturbance < schedule.fast_window {
        schedule.h_fast
    } else {
        schedule.h_slow
    };
    if let Some(te) = next_event {
        if te > t {
            h = h.min(te - t);
        }
    }
    h
}

#[derive(Debug, Clone, Copy, PartialEq, Eq)]
pub enum IntegratorKind {
    ModifiedEuler,
    Rkf45,
}

fn check_finite(v: &[f64]) -> Result<()> {
    if v.iter().all(|x| x.is_finite()) {
        Ok(())
    } else {
        Err(Error::Shape("non-finite derivative".into()))
    }
}

/// One Heun (modified Euler) step: x + h/2 (f(t,x) + f(t+h, x + h f(t,x))).
pub fn modified_euler_step<F>(f: &F, x: &[f64], t: f64, h: f64) -> Result<Vec<f64>>
where
    F: Fn(f64, &[f64]) -> Vec<f64>,
{
    debug_assert!(h > 0.0);
    let k1 = f(t, x);
    check_finite(&k1)?;
    let pred: Vec<f64> = x.iter().zip(&k1).map(|(xi, ki)| xi + h * ki).collect();
    let k2 = f(t + h, &pred);
    check_finite(&k2)?;
    Ok(x.iter()
        .zip(k1.iter().zip(&k2))
        .map(|(xi, (a, b))| xi + 0.5 * h * (a + b))
        .collect())
}

// Fehlberg 4(5) tableau
const RKF_C: [f64; 6] = [0.0, 0.25, 3.0 / 8.0, 12.0 / 13.0, 1.0, 0.5];
const RKF_A: [[f64; 5]; 6] = [
    [0.0, 0.0, 0.0, 0.0, 0.0],
    [0.25, 0.0, 0.0, 0.0, 0.0],
    [3.0 / 32.0, 9.0 / 32.0, 0.0, 0.0, 0.0],
    [1932.0 / 2197.0, -7200.0 / 2197.0, 7296.0 / 2197.0, 0.0, 0.0],
    [439.0 / 216.0, -8.0, 3680.0 / 513.0, -845.0 / 4104.0, 0.0],
    [-8.0 / 27.0, 2.0, -3544.0 / 2565.0, 1859.0 / 4104.0, -11.0 / 40.0],
];
const RKF_B5: [f64; 6] = [
    16.0 / 135.0,
    0.0,
    6656.0 / 12825.0,
    28561.0 / 56430.0,
    -9.0 / 50.0,
    2.0 / 55.0,
];
const RKF_B4: [f64; 6] = [
    25.0 / 216.0,
    0.0,
    1408.0 / 2565.0,
    2197.0 / 4104.0,
    -0.2,
    0.0,
];

/// One Runge-Kutta-Fehlberg 4(5) step. Returns the fifth-order solution and
/// the 4th/5th difference as a local error estimate.
pub fn rkf45_step<F>(f: &F, x: &[f64], t: f64, h: f64) -> Result<(Vec<f64>, f64)>
where
    F: Fn(f64, &[f64]) -> Vec<f64>,
{
    debug_assert!(h > 0.0);
    let n = x.len();
    let mut ks: Vec<Vec<f64>> = Vec::with_capacity(6);
    for s in 0..6 {
        let mut xs = x.to_vec();
        for (j, kj) in ks.iter().enumerate() {
            let a = RKF_A[s][j];
            if a != 0.0 {
                for i in 0..n {
                    xs[i] += h * a * kj[i];
                }
            }
        }
        let k = f(t + RKF_C[s] * h, &xs);
        check_finite(&k)?;
        ks.push(k);
    }
    let mut x5 = x.to_vec();
    let mut err = 0.0f64;
    for i in 0..n {
        let mut acc5 = 0.0;
        let mut acc4 = 0.0;
        for s in 0..6 {
            acc5 += RKF_B5[s] * ks[s][i];
            acc4 += RKF_B4[s] * ks[s][i];
        }
        x5[i] += h * acc5;
        err = err.max((h * (acc5 - acc4)).abs());
    }
    Ok((x5, err))
}

/// Advance `x` with the chosen method. RKF's error estimate is dropped here;
/// callers that log it use [`rkf45_step`] directly.
pub fn advance<F>(kind: IntegratorKind, f: &F, x: &[f64], t: f64, h: f64) -> Result<Vec<f64>>
where
    F: Fn(f64, &[f64]) -> Vec<f64>,
{
    match kind {
        IntegratorKind::ModifiedEuler => modified_euler_step(f, x, t, h),
        IntegratorKind::Rkf45 => Ok(rkf45_step(f, x, t, h)?.0),
    }
}
