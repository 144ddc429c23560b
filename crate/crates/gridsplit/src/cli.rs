//! Command-line front end: `run`, `eig`, and `compare`.

use std::fs;
use std::path::{Path, PathBuf};

use clap::{Args, Parser, Subcommand};
use gridsplit_core::engine::Engine;
use gridsplit_core::gfm::{build_state_space, eigen_stability};
use gridsplit_core::integrate::IntegratorKind;

use crate::casefile::{parse_case, CaseFile};
use crate::error::{CliError, Result};
use crate::exec::{RayonMap, StdClock};
use crate::output::{compare_traces, parse_csv, summarize, write_csv};
use crate::scenario::{bundled, parse_integrator, parse_scenario, resolve_source};

#[derive(Parser, Debug)]
#[command(name = "gridsplit", version, about = "Two-stage decomposed transient-stability simulator")]
pub struct Cli {
    #[command(subcommand)]
    pub command: Command,
}

#[derive(Subcommand, Debug)]
pub enum Command {
    /// Run a scenario and write the trace CSV plus a run summary.
    Run(RunArgs),
    /// Report converter eigenvalues and stability, optionally over a
    /// parameter sweep.
    Eig(EigArgs),
    /// Compare the voltage-magnitude traces of two run CSVs.
    Compare(CompareArgs),
}

#[derive(Args, Debug)]
pub struct RunArgs {
    /// Case file path or bundled name (e.g. case9).
    #[arg(long)]
    pub case: Option<String>,
    /// Scenario file path or bundled name (e.g. fault_bus2).
    #[arg(long)]
    pub scenario: String,
    /// Output directory for the CSV and summary.
    #[arg(long, default_value = ".")]
    pub out: PathBuf,
    /// Run the monolithic benchmark in lockstep and record its trace.
    #[arg(long)]
    pub benchmark: bool,
    /// Worker threads (default: GRIDSPLIT_WORKERS, then all cores).
    #[arg(long)]
    pub workers: Option<usize>,
    /// Override the port-current convergence tolerance.
    #[arg(long)]
    pub sigma: Option<f64>,
    /// Override the integrator (modified_euler | rkf45).
    #[arg(long)]
    pub integrator: Option<String>,
}

#[derive(Args, Debug)]
pub struct EigArgs {
    /// Case file path or bundled name.
    #[arg(long)]
    pub case: String,
    /// Sweep spec `name=start:step:stop` with name in {Rv_over_Xv, Lv};
    /// repeatable, swept as a grid.
    #[arg(long)]
    pub sweep: Vec<String>,
    /// Output directory for the sweep CSV.
    #[arg(long, default_value = ".")]
    pub out: PathBuf,
}

#[derive(Args, Debug)]
pub struct CompareArgs {
    pub a: PathBuf,
    pub b: PathBuf,
    /// Maximum allowed per-bus deviation.
    #[arg(long, default_value_t = 1e-6)]
    pub tol: f64,
    /// Compare against B's benchmark columns instead of its primary trace.
    #[arg(long)]
    pub bench_b: bool,
}

pub fn default_workers() -> usize {
    std::env::var("GRIDSPLIT_WORKERS")
        .ok()
        .and_then(|v| v.parse().ok())
        .filter(|&n| n >= 1)
        .unwrap_or_else(|| {
            std::thread::available_parallelism().map(|n| n.get()).unwrap_or(1)
        })
}

fn load_inputs(case_arg: Option<&str>, scenario_arg: &str) -> Result<(CaseFile, crate::scenario::ScenarioFile, String, String)> {
    let (sc_text, sc_name) = resolve_source(scenario_arg, bundled::scenario)?;
    let sf = parse_scenario(&sc_text, &sc_name)?;
    let case_ref = case_arg
        .map(String::from)
        .or_else(|| sf.case.clone())
        .ok_or_else(|| CliError::Input("no case given on the command line or in the scenario".into()))?;
    let (case_text, case_name) = resolve_source(&case_ref, bundled::case)?;
    let cf = parse_case(&case_text, &case_name)?;
    Ok((cf, sf, case_name, sc_name))
}

pub fn cmd_run(args: &RunArgs) -> Result<()> {
    let (cf, sf, case_name, sc_name) = load_inputs(args.case.as_deref(), &args.scenario)?;
    let mut spec = sf.to_spec(&cf.case)?;
    if args.benchmark {
        spec.benchmark = true;
    }
    if let Some(s) = args.sigma {
        spec.sigma = s;
    }
    if let Some(i) = &args.integrator {
        spec.integrator = parse_integrator(i)
            .ok_or_else(|| CliError::Input(format!("unknown integrator '{i}'")))?;
    }
    let workers = args.workers.unwrap_or_else(default_workers).max(1);
    let integrator_name = match spec.integrator {
        IntegratorKind::ModifiedEuler => "modified_euler",
        IntegratorKind::Rkf45 => "rkf45",
    };
    let sigma = spec.sigma;

    let mut engine = Engine::new(cf.case.clone(), cf.devices.clone(), spec)?;
    engine.initialize()?;
    let exec = RayonMap::new(workers);
    let clock = StdClock::new();
    let (result, log) = engine.run(&exec, &clock)?;

    fs::create_dir_all(&args.out)
        .map_err(|e| CliError::Io { path: args.out.display().to_string(), source: e })?;
    let stem = Path::new(&args.scenario)
        .file_stem()
        .map(|s| s.to_string_lossy().to_string())
        .unwrap_or_else(|| "run".to_string());
    let csv_path = args.out.join(format!("{stem}.csv"));
    fs::write(&csv_path, write_csv(&result))
        .map_err(|e| CliError::Io { path: csv_path.display().to_string(), source: e })?;
    let summary = summarize(&case_name, &sc_name, sigma, integrator_name, workers, &result, &log);
    let summary_path = args.out.join(format!("{stem}_summary.json"));
    fs::write(
        &summary_path,
        serde_json::to_string_pretty(&summary).expect("serializable summary"),
    )
    .map_err(|e| CliError::Io { path: summary_path.display().to_string(), source: e })?;

    println!(
        "{}: {} samples, iterations max {} median {}, wrote {}",
        sc_name,
        summary.samples,
        summary.max_iterations,
        summary.median_iterations,
        csv_path.display()
    );
    if let Some(dev) = summary.max_deviation {
        println!(
            "benchmark deviation: max {dev:e} pu at bus {} t = {} s",
            summary.worst_deviation_bus.unwrap_or(0),
            summary.worst_deviation_time.unwrap_or(0.0)
        );
    }
    Ok(())
}

/// `name=start:step:stop` grid.
fn parse_sweep(spec: &str) -> Result<(String, Vec<f64>)> {
    let (name, grid) = spec
        .split_once('=')
        .ok_or_else(|| CliError::Input(format!("bad sweep '{spec}', expected name=start:step:stop")))?;
    let parts: Vec<&str> = grid.split(':').collect();
    if parts.len() != 3 {
        return Err(CliError::Input(format!("bad sweep grid '{grid}'")));
    }
    let nums: Vec<f64> = parts
        .iter()
        .map(|p| p.parse::<f64>().map_err(|_| CliError::Input(format!("bad sweep number '{p}'"))))
        .collect::<Result<_>>()?;
    let (start, step, stop) = (nums[0], nums[1], nums[2]);
    if step <= 0.0 || stop < start {
        return Err(CliError::Input(format!("bad sweep range '{grid}'")));
    }
    let mut vals = Vec::new();
    let mut v = start;
    while v <= stop + 1e-12 * step {
        vals.push(v);
        v += step;
    }
    Ok((name.trim().to_string(), vals))
}

pub fn cmd_eig(args: &EigArgs) -> Result<()> {
    let (case_text, case_name) = resolve_source(&args.case, bundled::case)?;
    let cf = parse_case(&case_text, &case_name)?;
    if cf.devices.gfms.is_empty() {
        return Err(CliError::Input(format!("{case_name} contains no grid-forming device")));
    }
    // aggregated parameters as the engine would build them
    let engine = Engine::new(cf.case.clone(), cf.devices.clone(), Default::default())?;
    let plants = engine.gfm_params();

    if args.sweep.is_empty() {
        for (bus, params) in &plants {
            let ss = build_state_space(params).map_err(CliError::Core)?;
            let (ev, stable) = eigen_stability(&ss).map_err(CliError::Core)?;
            println!("gfm at bus {}: stable = {stable}", bus + 1);
            for l in &ev {
                println!("  {:+.6e} {:+.6e}j", l.re, l.im);
            }
        }
        return Ok(());
    }

    let mut grids: Vec<(String, Vec<f64>)> = Vec::new();
    for s in &args.sweep {
        let (name, vals) = parse_sweep(s)?;
        if !["Rv_over_Xv", "Lv"].contains(&name.as_str()) {
            return Err(CliError::Input(format!("unknown sweep parameter '{name}'")));
        }
        grids.push((name, vals));
    }
    let (bus, base) = plants[0];
    let base_ratio = base.r_v / (base.w1 * base.l_v);
    let mut rows = vec![format!("rv_over_xv,lv,max_re,stable")];
    let (ratios, lvs) = {
        let find = |n: &str| grids.iter().find(|(g, _)| g == n).map(|(_, v)| v.clone());
        (
            find("Rv_over_Xv").unwrap_or_else(|| vec![base_ratio]),
            find("Lv").unwrap_or_else(|| vec![base.l_v]),
        )
    };
    for &lv in &lvs {
        for &ratio in &ratios {
            let mut p = base;
            p.l_v = lv;
            let eff_ratio = ratio;
            p.r_v = eff_ratio * p.w1 * p.l_v;
            let ss = build_state_space(&p).map_err(CliError::Core)?;
            let (ev, stable) = eigen_stability(&ss).map_err(CliError::Core)?;
            let max_re = ev.iter().map(|l| l.re).fold(f64::NEG_INFINITY, f64::max);
            rows.push(format!("{},{},{},{}", eff_ratio, p.l_v, max_re, stable));
        }
    }
    fs::create_dir_all(&args.out)
        .map_err(|e| CliError::Io { path: args.out.display().to_string(), source: e })?;
    let path = args.out.join("eig_sweep.csv");
    fs::write(&path, rows.join("\n") + "\n")
        .map_err(|e| CliError::Io { path: path.display().to_string(), source: e })?;
    println!(
        "gfm at bus {}: wrote {} sweep points to {}",
        bus + 1,
        rows.len() - 1,
        path.display()
    );
    Ok(())
}

pub fn cmd_compare(args: &CompareArgs) -> Result<()> {
    let read = |p: &PathBuf| -> Result<String> {
        fs::read_to_string(p).map_err(|e| CliError::Io { path: p.display().to_string(), source: e })
    };
    let a = parse_csv(&read(&args.a)?, &args.a.display().to_string())?;
    let b = parse_csv(&read(&args.b)?, &args.b.display().to_string())?;
    let dev = compare_traces(&a, &b, args.bench_b)?;
    println!("column, max_deviation, t_worst");
    for (name, d, t) in &dev.per_column {
        println!("{name}, {d:e}, {t}");
    }
    println!("max deviation: {:e} (tol {:e})", dev.max_deviation, args.tol);
    if dev.max_deviation > args.tol {
        return Err(CliError::ComparisonFailed(format!(
            "max deviation {:e} exceeds tol {:e}",
            dev.max_deviation, args.tol
        )));
    }
    Ok(())
}

pub fn dispatch(cli: &Cli) -> Result<()> {
    match &cli.command {
        Command::Run(a) => cmd_run(a),
        Command::Eig(a) => cmd_eig(a),
        Command::Compare(a) => cmd_compare(a),
    }
}
