//! Shared fixtures and independent oracles for the integration tests.
#![allow(dead_code)]

use gridsplit_core::gfm::{input, state, GfmParams};

pub const W1: f64 = 2.0 * core::f64::consts::PI * 60.0;

/// 500 kVA / 400 V converter module constants matching the bundled case.
pub fn module_params() -> GfmParams {
    let x_v = W1 * 0.030;
    let v_pk = 400.0 * (2.0f64 / 3.0).sqrt();
    let s_r = 500e3;
    GfmParams {
        r_f: 0.001,
        l_f: 5e-3,
        c_f: 10e-6,
        r_g: 0.057,
        l_g: 15e-3,
        r_v: 0.2 * x_v,
        l_v: 0.030,
        kp_id: 5.0,
        ki_id: 5000.0,
        kp_iq: 0.0,
        ki_iq: 0.0,
        w_lpf: 300.0,
        m_p: 0.25 * W1 / s_r,
        n_q: 0.25 * v_pk / s_r,
        w1: W1,
        s_rating: s_r,
        i_gd0: 0.0,
        i_gq0: 0.0,
        i_ld0: 0.0,
        i_lq0: 0.0,
        v_cd0: v_pk,
        v_cq0: 0.0,
        v_cmd_d0: v_pk,
        v_cmd_q0: 0.0,
    }
}

/// Direct scalar evaluation of the converter equations, one signal at a
/// time. Shares nothing with the matrix assembly path it cross-checks.
pub fn gfm_equation_oracle(p: &GfmParams, x: &[f64], u: &[f64]) -> [f64; 13] {
    use input::*;
    use state::*;
    // measurements rotated into the control frame
    let v_cd_c = x[V_CD] + p.v_cq0 * x[THETA_PS];
    let v_cq_c = x[V_CQ] - p.v_cd0 * x[THETA_PS];
    let i_gd_c = x[I_GD] + p.i_gq0 * x[THETA_PS];
    let i_gq_c = x[I_GQ] - p.i_gd0 * x[THETA_PS];
    let i_ld_c = x[I_LD] + p.i_lq0 * x[THETA_PS];
    let i_lq_c = x[I_LQ] - p.i_ld0 * x[THETA_PS];
    // current-loop commands
    let e_d = x[I_LD_REF] - i_ld_c;
    let e_q = x[I_LQ_REF] - i_lq_c;
    let v_cmd_d_c = p.kp_id * e_d + p.ki_id * x[INT_ID] - p.w1 * p.l_f * i_lq_c;
    let v_cmd_q_c = p.kp_iq * e_q + p.ki_iq * x[INT_IQ] - p.w1 * p.l_f * i_ld_c;
    // rotate the command back to the grid frame
    let v_cmd_d = v_cmd_d_c - p.v_cmd_q0 * x[THETA_PS];
    let v_cmd_q = v_cmd_q_c + p.v_cmd_d0 * x[THETA_PS];
    // measured power deviations
    let dp = 1.5 * (p.i_gd0 * v_cd_c + p.i_gq0 * v_cq_c + p.v_cd0 * i_gd_c + p.v_cq0 * i_gq_c);
    let dq = 1.5 * (-p.i_gq0 * v_cd_c + p.i_gd0 * v_cq_c + p.v_cq0 * i_gd_c + p.v_cd0 * i_gq_c);
    let de = p.n_q * (u[Q_REF] - x[Q_LPF]);

    let mut dx = [0.0f64; 13];
    dx[I_GD] = (x[V_CD] - u[V_GD] - p.r_g * x[I_GD]) / p.l_g + p.w1 * x[I_GQ];
    dx[I_GQ] = (x[V_CQ] - u[V_GQ] - p.r_g * x[I_GQ]) / p.l_g - p.w1 * x[I_GD];
    dx[V_CD] = (x[I_LD] - x[I_GD]) / p.c_f + p.w1 * x[V_CQ];
    dx[V_CQ] = (x[I_LQ] - x[I_GQ]) / p.c_f - p.w1 * x[V_CD];
    dx[I_LD] = (v_cmd_d - x[V_CD] - p.r_f * x[I_LD]) / p.l_f + p.w1 * x[I_LQ];
    dx[I_LQ] = (v_cmd_q - x[V_CQ] - p.r_f * x[I_LQ]) / p.l_f - p.w1 * x[I_LD];
    dx[INT_ID] = e_d;
    dx[INT_IQ] = e_q;
    dx[I_LD_REF] = (de - v_cd_c - p.r_v * x[I_LD_REF]) / p.l_v + p.w1 * x[I_LQ_REF];
    dx[I_LQ_REF] = (-v_cq_c - p.r_v * x[I_LQ_REF]) / p.l_v - p.w1 * x[I_LD_REF];
    dx[P_LPF] = p.w_lpf * (dp - x[P_LPF]);
    dx[THETA_PS] = p.m_p * (u[P_REF] - x[P_LPF]);
    dx[Q_LPF] = p.w_lpf * (dq - x[Q_LPF]);
    dx
}

/// Matrix exponential by scaling-and-squaring over a Taylor series;
/// accurate well past the tolerances it is used at for stable matrices.
pub fn expm(a: &[Vec<f64>], t: f64) -> Vec<Vec<f64>> {
    let n = a.len();
    let norm: f64 = a
        .iter()
        .map(|row| row.iter().map(|v| v.abs()).sum::<f64>())
        .fold(0.0, f64::max)
        * t.abs();
    let s = if norm > 0.25 { (norm / 0.25).log2().ceil() as u32 } else { 0 };
    let scale = t / (1u64 << s) as f64;
    let mul = |p: &Vec<Vec<f64>>, q: &Vec<Vec<f64>>| -> Vec<Vec<f64>> {
        let mut out = vec![vec![0.0; n]; n];
        for i in 0..n {
            for k in 0..n {
                let v = p[i][k];
                if v == 0.0 {
                    continue;
                }
                for j in 0..n {
                    out[i][j] += v * q[k][j];
                }
            }
        }
        out
    };
    // Taylor to order 24 on the scaled matrix
    let mut term: Vec<Vec<f64>> = (0..n)
        .map(|i| (0..n).map(|j| if i == j { 1.0 } else { 0.0 }).collect())
        .collect();
    let mut acc = term.clone();
    let scaled: Vec<Vec<f64>> = a
        .iter()
        .map(|row| row.iter().map(|v| v * scale).collect())
        .collect();
    for k in 1..=24 {
        term = mul(&term, &scaled);
        for row in term.iter_mut() {
            for v in row.iter_mut() {
                *v /= k as f64;
            }
        }
        for i in 0..n {
            for j in 0..n {
                acc[i][j] += term[i][j];
            }
        }
    }
    for _ in 0..s {
        acc = mul(&acc, &acc);
    }
    acc
}
