//! Trace CSV emission, the run summary, and trace comparison.

use std::collections::BTreeMap;
use std::fmt::Write as _;

use gridsplit_core::engine::{compare_to_benchmark, ConvergenceLog, TimeSeriesResult};
use serde::Serialize;

use crate::error::{CliError, Result};

/// CSV header for a result. The schema is pinned: time, iteration count,
/// voltage magnitudes then angles per bus, machine angles then speeds,
/// converter states, and optionally the benchmark magnitudes.
pub fn csv_header(result: &TimeSeriesResult) -> String {
    let n = result.bus_v.first().map_or(0, Vec::len);
    let mut cols = vec!["t".to_string(), "iter".to_string()];
    for b in 1..=n {
        cols.push(format!("V_mag_bus{b}"));
    }
    for b in 1..=n {
        cols.push(format!("V_ang_bus{b}"));
    }
    for &bus in &result.machine_buses {
        cols.push(format!("delta_g{}", bus + 1));
    }
    for &bus in &result.machine_buses {
        cols.push(format!("omega_g{}", bus + 1));
    }
    for &bus in &result.gfm_buses {
        for k in 1..=13 {
            if result.gfm_buses.len() == 1 {
                cols.push(format!("gfm_x{k}"));
            } else {
                cols.push(format!("gfm{}_x{k}", bus + 1));
            }
        }
    }
    if result.bench_v.is_some() {
        for b in 1..=n {
            cols.push(format!("bench_V_mag_bus{b}"));
        }
    }
    cols.join(",")
}

pub fn write_csv(result: &TimeSeriesResult) -> String {
    let mut out = csv_header(result);
    out.push('\n');
    let n = result.bus_v.first().map_or(0, Vec::len);
    for (k, &t) in result.times.iter().enumerate() {
        let mut row = String::new();
        let _ = write!(row, "{t},{}", result.iterations[k]);
        for b in 0..n {
            let _ = write!(row, ",{}", result.bus_v[k][b].norm());
        }
        for b in 0..n {
            let _ = write!(row, ",{}", result.bus_v[k][b].arg());
        }
        for m in &result.machine_states[k] {
            let _ = write!(row, ",{}", m.delta);
        }
        for m in &result.machine_states[k] {
            let _ = write!(row, ",{}", m.omega);
        }
        for g in &result.gfm_states[k] {
            for v in g {
                let _ = write!(row, ",{v}");
            }
        }
        if let Some(bench) = &result.bench_v {
            for v in &bench[k] {
                let _ = write!(row, ",{}", v.norm());
            }
        }
        out.push_str(&row);
        out.push('\n');
    }
    out
}

#[derive(Debug, Serialize)]
pub struct RunSummary {
    pub case: String,
    pub scenario: String,
    pub samples: usize,
    pub total_iterations: usize,
    pub max_iterations: usize,
    pub median_iterations: f64,
    pub clamped_steps: usize,
    pub sigma: f64,
    pub integrator: String,
    pub workers: usize,
    pub wall_device_s: f64,
    pub wall_solve_s: f64,
    pub wall_bench_s: f64,
    #[serde(skip_serializing_if = "Option::is_none")]
    pub max_deviation: Option<f64>,
    #[serde(skip_serializing_if = "Option::is_none")]
    pub worst_deviation_bus: Option<usize>,
    #[serde(skip_serializing_if = "Option::is_none")]
    pub worst_deviation_time: Option<f64>,
}

pub fn summarize(
    case: &str,
    scenario: &str,
    sigma: f64,
    integrator: &str,
    workers: usize,
    result: &TimeSeriesResult,
    log: &ConvergenceLog,
) -> RunSummary {
    let mut iters: Vec<usize> = result.iterations.clone();
    iters.sort_unstable();
    let median_iterations = if iters.is_empty() {
        0.0
    } else if iters.len() % 2 == 1 {
        iters[iters.len() / 2] as f64
    } else {
        (iters[iters.len() / 2 - 1] + iters[iters.len() / 2]) as f64 / 2.0
    };
    let deviation = result.bench_v.as_ref().map(|_| {
        compare_to_benchmark(result).expect("bench trace present")
    });
    RunSummary {
        case: case.to_string(),
        scenario: scenario.to_string(),
        samples: result.times.len(),
        total_iterations: log.total_iterations(),
        max_iterations: result.iterations.iter().copied().max().unwrap_or(0),
        median_iterations,
        clamped_steps: result.clamped.iter().filter(|&&c| c).count(),
        sigma,
        integrator: integrator.to_string(),
        workers,
        wall_device_s: log.steps.iter().map(|s| s.wall_device).sum(),
        wall_solve_s: log.steps.iter().map(|s| s.wall_solve).sum(),
        wall_bench_s: log.steps.iter().map(|s| s.wall_bench).sum(),
        max_deviation: deviation.as_ref().map(|d| d.max_deviation),
        worst_deviation_bus: deviation.as_ref().map(|d| d.worst_bus + 1),
        worst_deviation_time: deviation.as_ref().map(|d| d.worst_time),
    }
}

/// A parsed trace CSV: time axis plus named columns.
pub struct Trace {
    pub times: Vec<f64>,
    pub columns: BTreeMap<String, Vec<f64>>,
}

pub fn parse_csv(text: &str, path: &str) -> Result<Trace> {
    let mut lines = text.lines();
    let header = lines
        .next()
        .ok_or_else(|| CliError::Input(format!("{path}: empty csv")))?;
    let names: Vec<&str> = header.split(',').collect();
    let mut cols: Vec<Vec<f64>> = vec![Vec::new(); names.len()];
    for (lineno, line) in lines.enumerate() {
        if line.trim().is_empty() {
            continue;
        }
        let fields: Vec<&str> = line.split(',').collect();
        if fields.len() != names.len() {
            return Err(CliError::Parse {
                path: path.into(),
                line: lineno + 2,
                msg: format!("expected {} fields, found {}", names.len(), fields.len()),
            });
        }
        for (c, f) in cols.iter_mut().zip(&fields) {
            c.push(f.parse::<f64>().map_err(|_| CliError::Parse {
                path: path.into(),
                line: lineno + 2,
                msg: format!("bad number '{f}'"),
            })?);
        }
    }
    let mut columns = BTreeMap::new();
    let mut times = Vec::new();
    for (name, col) in names.iter().zip(cols) {
        if *name == "t" {
            times = col;
        } else {
            columns.insert(name.to_string(), col);
        }
    }
    if times.is_empty() {
        return Err(CliError::Input(format!("{path}: missing 't' column")));
    }
    Ok(Trace { times, columns })
}

#[derive(Debug)]
pub struct TraceDeviation {
    /// (column name, max abs deviation, time of worst deviation)
    pub per_column: Vec<(String, f64, f64)>,
    pub max_deviation: f64,
}

/// Compare voltage-magnitude columns of two traces on a shared time axis.
/// `bench_b` selects B's benchmark columns instead of its primary ones.
pub fn compare_traces(a: &Trace, b: &Trace, bench_b: bool) -> Result<TraceDeviation> {
    if a.times.len() != b.times.len()
        || a.times.iter().zip(&b.times).any(|(x, y)| x != y)
    {
        return Err(CliError::Input("time axes differ".into()));
    }
    let prefix_b = if bench_b { "bench_V_mag_bus" } else { "V_mag_bus" };
    let mut per_column = Vec::new();
    let mut max_deviation = 0.0f64;
    for (name, col_a) in &a.columns {
        let Some(bus) = name.strip_prefix("V_mag_bus") else {
            continue;
        };
        let b_name = format!("{prefix_b}{bus}");
        let col_b = b
            .columns
            .get(&b_name)
            .ok_or_else(|| CliError::Input(format!("second trace lacks column {b_name}")))?;
        let mut worst = 0.0f64;
        let mut worst_t = 0.0f64;
        for ((x, y), &t) in col_a.iter().zip(col_b).zip(&a.times) {
            let d = (x - y).abs();
            if d > worst {
                worst = d;
                worst_t = t;
            }
        }
        max_deviation = max_deviation.max(worst);
        per_column.push((name.clone(), worst, worst_t));
    }
    if per_column.is_empty() {
        return Err(CliError::Input("no V_mag_bus columns to compare".into()));
    }
    Ok(TraceDeviation { per_column, max_deviation })
}
