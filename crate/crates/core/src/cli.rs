//! `dvoc` command-line front end.
//!
//! Exit codes: 0 success or certified, 1 evaluated but negative, 2 input
//! error, 3 numerical failure.

use std::ffi::OsString;
use std::fmt::Write as _;
use std::io::Write;
use std::path::{Path, PathBuf};

use clap::{Args, Parser, Subcommand, ValueEnum};
use num_complex::Complex64;
use serde::Serialize;

use crate::certifier::{certify_with, default_workers, parallel_map, CertificationReport, CertifyError};
use crate::equilibrium::solve_equilibrium;
use crate::network::ReducedNetwork;
use crate::scenario_io::{load_scenario_with, render_report, write_trajectory_csv, LoadedScenario, Override, ReportFormat};
use crate::selftest::{run_selftest, SelftestConfig};
use crate::simulator::{
    event_networks, final_deviation, monitor_segments, overcurrent_scan, peak_currents, simulate_model, EventKind, Model, Overcurrent,
    Scenario, SegmentVerdict, SimulationError, Trajectory,
};

pub const EXIT_OK: i32 = 0;
pub const EXIT_NEGATIVE: i32 = 1;
pub const EXIT_INPUT: i32 = 2;
pub const EXIT_NUMERICAL: i32 = 3;

/// Deviation below which a run counts as recovered.
pub const RECOVERY_TOL: f64 = 1e-3;

#[derive(Debug, Parser)]
#[command(name = "dvoc", version, about = "Passivity certificates and fault simulation for dVOC converter plants")]
pub struct Cli {
    #[command(subcommand)]
    pub command: Command,
}

#[derive(Debug, Clone, Copy, PartialEq, Eq, ValueEnum)]
pub enum OnOff {
    On,
    Off,
}

#[derive(Debug, Clone, Copy, PartialEq, Eq, ValueEnum)]
pub enum FormatArg {
    Human,
    Json,
}

impl From<FormatArg> for ReportFormat {
    fn from(f: FormatArg) -> Self {
        match f {
            FormatArg::Human => ReportFormat::Human,
            FormatArg::Json => ReportFormat::Json,
        }
    }
}

#[derive(Debug, Clone, Copy, PartialEq, Eq, ValueEnum)]
pub enum Axis {
    /// Multiplies every `p*`.
    PScale,
    /// Multiplies the grid impedance.
    ZGridScale,
    /// Retained grid voltage during every dip (adds a 150 ms dip at 0.1 s if none).
    DipRetained,
}

#[derive(Debug, Args)]
pub struct ScenarioArgs {
    /// Scenario file (JSON).
    pub scenario: PathBuf,
    /// Override a scenario field by dotted path, e.g. `converters.3.p_star=0.8`.
    #[arg(long = "set", value_name = "PATH=VALUE")]
    pub set: Vec<String>,
    /// Seed for setpoint draws on converters without explicit p*/q*.
    #[arg(long)]
    pub seed: Option<u64>,
    /// Force the current limiter on or off at t = 0.
    #[arg(long, value_enum)]
    pub limiter: Option<OnOff>,
}

#[derive(Debug, Subcommand)]
pub enum Command {
    /// Evaluate delta_k + epsilon_net > 0 for every converter.
    Certify {
        #[command(flatten)]
        scenario: ScenarioArgs,
        /// Use the equilibrium-independent node index.
        #[arg(long)]
        conservative: bool,
        /// Also certify every event-modified network.
        #[arg(long)]
        fault_mode: bool,
        #[arg(short, long)]
        output: Option<PathBuf>,
        #[arg(long, value_enum)]
        format: Option<FormatArg>,
    },
    /// Run the time-domain simulation and summarize it.
    Simulate {
        #[command(flatten)]
        scenario: ScenarioArgs,
        /// Integrate the original-frame converter law.
        #[arg(long)]
        unrotated_model: bool,
        /// Trajectory CSV path.
        #[arg(long)]
        csv: Option<PathBuf>,
        /// Summary JSON path.
        #[arg(short, long)]
        output: Option<PathBuf>,
    },
    /// Certify (and optionally simulate) over a parameter grid.
    Sweep {
        #[command(flatten)]
        scenario: ScenarioArgs,
        #[arg(long, value_enum)]
        axis: Axis,
        /// `start:stop:count` or a comma-separated list.
        #[arg(long)]
        values: String,
        /// Simulate each point (implied by the dip axis).
        #[arg(long)]
        simulate: bool,
        #[arg(long)]
        conservative: bool,
        /// Worker threads (default: DVOC_WORKERS or available cores).
        #[arg(long)]
        workers: Option<usize>,
        /// Table CSV path.
        #[arg(short, long)]
        output: Option<PathBuf>,
    },
    /// Print the Kron-reduced network and its passivity index.
    Reduce {
        #[command(flatten)]
        scenario: ScenarioArgs,
        #[arg(short, long)]
        output: Option<PathBuf>,
    },
    /// Run the bundled invariant suite.
    Selftest {
        #[arg(long, default_value_t = 1)]
        seed: u64,
        /// Draw-count multiplier.
        #[arg(long, default_value_t = 1)]
        scale: usize,
    },
}

struct Failure {
    code: i32,
    message: String,
}

fn fail(code: i32, message: impl Into<String>) -> Failure {
    Failure { code, message: message.into() }
}

type Outcome = Result<i32, Failure>;

/// Parses `args` (including the program name) and runs the command.
pub fn run<I, T>(args: I, out: &mut dyn Write) -> i32
where
    I: IntoIterator<Item = T>,
    T: Into<OsString> + Clone,
{
    let cli = match Cli::try_parse_from(args) {
        Ok(c) => c,
        Err(e) => {
            let code = if e.use_stderr() { EXIT_INPUT } else { EXIT_OK };
            let _ = e.print();
            return code;
        }
    };
    match execute(cli.command, out) {
        Ok(code) => code,
        Err(f) => {
            eprintln!("error: {}", f.message);
            f.code
        }
    }
}

fn execute(command: Command, out: &mut dyn Write) -> Outcome {
    match command {
        Command::Certify { scenario, conservative, fault_mode, output, format } => {
            cmd_certify(&scenario, conservative, fault_mode, output, format, out)
        }
        Command::Simulate { scenario, unrotated_model, csv, output } => cmd_simulate(&scenario, unrotated_model, csv, output, out),
        Command::Sweep { scenario, axis, values, simulate, conservative, workers, output } => {
            cmd_sweep(&scenario, axis, &values, simulate, conservative, workers, output, out)
        }
        Command::Reduce { scenario, output } => cmd_reduce(&scenario, output, out),
        Command::Selftest { seed, scale } => cmd_selftest(seed, scale, out),
    }
}

fn io_fail(path: &Path, e: std::io::Error) -> Failure {
    fail(EXIT_INPUT, format!("{}: {e}", path.display()))
}

fn emit(out: &mut dyn Write, text: &str) -> Result<(), Failure> {
    out.write_all(text.as_bytes()).map_err(|e| fail(EXIT_INPUT, format!("stdout: {e}")))
}

fn load(args: &ScenarioArgs) -> Result<LoadedScenario, Failure> {
    let mut overrides = Vec::new();
    if let Some(seed) = args.seed {
        overrides.push(Override { path: vec!["random_setpoints".into()], value: serde_json::json!({ "seed": seed }) });
    }
    for s in &args.set {
        overrides.push(s.parse().map_err(|e: crate::scenario_io::LoadError| fail(EXIT_INPUT, e.to_string()))?);
    }
    let mut loaded = load_scenario_with(&args.scenario, &overrides).map_err(|e| fail(EXIT_INPUT, e.to_string()))?;
    if let Some(l) = args.limiter {
        loaded.scenario.limiter = l == OnOff::On;
    }
    Ok(loaded)
}

fn resolve_path(scenario_file: &Path, configured: Option<&String>) -> Option<PathBuf> {
    configured.map(|p| {
        let p = PathBuf::from(p);
        if p.is_absolute() {
            p
        } else {
            scenario_file.parent().unwrap_or(Path::new(".")).join(p)
        }
    })
}

/// Certificate for one network state; the full δ is used when an equilibrium solves.
pub fn certify_state(
    net: &ReducedNetwork,
    scenario: &Scenario,
    v_g: f64,
    conservative: bool,
) -> Result<CertificationReport, CertifyError> {
    let params = scenario.params();
    let eq = if conservative { None } else { solve_equilibrium(net, &params, scenario.omega_delta, v_g, None).ok() };
    certify_with(net, &params, eq.as_ref(), conservative)
}

fn cmd_certify(
    args: &ScenarioArgs,
    conservative: bool,
    fault_mode: bool,
    output: Option<PathBuf>,
    format: Option<FormatArg>,
    out: &mut dyn Write,
) -> Outcome {
    let loaded = load(args)?;
    let s = &loaded.scenario;
    let format = format.map_or(loaded.outputs.report_format, ReportFormat::from);
    let states: Vec<(String, ReducedNetwork, f64)> = if fault_mode {
        event_networks(s).map_err(|e| fail(EXIT_INPUT, e.to_string()))?
    } else {
        let net = s.network(s.initial_grid_z()).map_err(|e| fail(EXIT_INPUT, e.to_string()))?;
        vec![("pre-event".into(), net, s.v_g_nominal)]
    };
    let mut text = String::new();
    let mut json = Vec::new();
    let mut all_certified = true;
    for (label, net, v_g) in &states {
        match certify_state(net, s, *v_g, conservative) {
            Ok(r) => {
                all_certified &= r.certified;
                if fault_mode {
                    let _ = writeln!(text, "== {label} (v_g = {v_g} pu)");
                }
                text.push_str(&render_report(&r, ReportFormat::Human));
                json.push(serde_json::json!({ "state": label, "report": r }));
            }
            Err(CertifyError::NetworkNotPassive { lambda_min }) => {
                all_certified = false;
                let _ = writeln!(text, "== {label}: network not passive (lambda_min = {lambda_min:.6e}); certificate does not apply");
                json.push(serde_json::json!({ "state": label, "not_passive": lambda_min }));
            }
            Err(e) => return Err(fail(EXIT_INPUT, e.to_string())),
        }
    }
    emit(out, &text)?;
    let target = output.or_else(|| resolve_path(&args.scenario, loaded.outputs.report.as_ref()));
    if let Some(path) = target {
        let body = match format {
            ReportFormat::Human => text.clone(),
            ReportFormat::Json if !fault_mode && json[0].get("report").is_some() => {
                let r: CertificationReport = serde_json::from_value(json[0]["report"].clone()).expect("report round-trips");
                render_report(&r, ReportFormat::Json)
            }
            ReportFormat::Json => serde_json::to_string_pretty(&json).expect("serializable") + "\n",
        };
        std::fs::write(&path, body).map_err(|e| io_fail(&path, e))?;
    }
    Ok(if all_certified { EXIT_OK } else { EXIT_NEGATIVE })
}

#[derive(Debug, Clone, Serialize)]
pub struct SimulationSummary {
    pub scenario: String,
    pub model: &'static str,
    pub samples: usize,
    pub t_end: f64,
    pub final_deviation: Option<f64>,
    /// Every certified, monitored segment kept `ν` non-increasing; `None` when none was monitored.
    pub nu_non_increasing: Option<bool>,
    pub segments: Vec<SegmentVerdict>,
    pub peak_currents: Vec<f64>,
    pub overcurrent: Vec<Overcurrent>,
}

pub fn summarize(scenario: &Scenario, traj: &Trajectory, model: Model) -> SimulationSummary {
    let params = scenario.params();
    let segments = monitor_segments(traj, &params);
    let checked: Vec<bool> = segments.iter().filter(|v| v.certified).filter_map(|v| v.non_increasing).collect();
    let i_max: Vec<f64> = params.iter().map(|p| p.i_max).collect();
    SimulationSummary {
        scenario: scenario.name.clone(),
        model: match model {
            Model::Rotated => "rotated",
            Model::Unrotated => "unrotated",
        },
        samples: traj.len(),
        t_end: traj.times.last().copied().unwrap_or(0.0),
        final_deviation: final_deviation(traj),
        nu_non_increasing: (!checked.is_empty()).then(|| checked.iter().all(|&b| b)),
        segments,
        peak_currents: peak_currents(traj),
        overcurrent: overcurrent_scan(traj, &i_max),
    }
}

fn render_summary(s: &SimulationSummary) -> String {
    let mut t = String::new();
    let _ = writeln!(t, "scenario: {} ({} model, {} samples to t = {} s)", s.scenario, s.model, s.samples, s.t_end);
    match s.final_deviation {
        Some(d) => {
            let _ = writeln!(t, "final deviation from equilibrium: {d:.3e} pu");
        }
        None => {
            let _ = writeln!(t, "final deviation from equilibrium: n/a (no equilibrium)");
        }
    }
    let verdict = match s.nu_non_increasing {
        Some(true) => "non-increasing on every certified segment",
        Some(false) => "INCREASE detected on a certified segment",
        None => "not monitored",
    };
    let _ = writeln!(t, "composite storage nu: {verdict}");
    for v in &s.segments {
        let nu = match v.non_increasing {
            Some(true) => "ok".to_string(),
            Some(false) => format!("{} violations", v.violations),
            None => "unmonitored".to_string(),
        };
        let cert = if v.certified { "certified" } else { "not certified" };
        let _ = writeln!(t, "  segment {} [{}, {}] s: {cert}, nu {nu}", v.index, v.t_start, v.t_end);
    }
    if s.overcurrent.is_empty() {
        let _ = writeln!(t, "overcurrent: none");
    }
    for o in &s.overcurrent {
        let _ = writeln!(t, "overcurrent: converter {} from t = {} s, peak {:.4} pu", o.converter + 1, o.first_exceedance, o.peak);
    }
    t
}

fn cmd_simulate(args: &ScenarioArgs, unrotated: bool, csv: Option<PathBuf>, output: Option<PathBuf>, out: &mut dyn Write) -> Outcome {
    let loaded = load(args)?;
    let s = &loaded.scenario;
    let model = if unrotated { Model::Unrotated } else { Model::Rotated };
    let traj = match simulate_model(s, model) {
        Ok(t) => t,
        Err(SimulationError::Diverged { time, .. }) => return Err(fail(EXIT_NUMERICAL, format!("simulation diverged at t = {time} s"))),
        Err(e @ (SimulationError::InitialEquilibrium(_) | SimulationError::Numerics(_))) => return Err(fail(EXIT_NUMERICAL, e.to_string())),
        Err(e) => return Err(fail(EXIT_INPUT, e.to_string())),
    };
    let csv_path = csv
        .or_else(|| resolve_path(&args.scenario, loaded.outputs.csv.as_ref()))
        .unwrap_or_else(|| PathBuf::from("trajectory.csv"));
    write_trajectory_csv(&traj, &csv_path).map_err(|e| io_fail(&csv_path, e))?;
    let summary = summarize(s, &traj, model);
    emit(out, &render_summary(&summary))?;
    let _ = writeln!(out, "trajectory: {}", csv_path.display());
    if let Some(path) = output {
        let body = serde_json::to_string_pretty(&summary).expect("serializable") + "\n";
        std::fs::write(&path, body).map_err(|e| io_fail(&path, e))?;
    }
    Ok(if summary.nu_non_increasing == Some(false) { EXIT_NEGATIVE } else { EXIT_OK })
}

pub fn parse_values(spec: &str) -> Result<Vec<f64>, String> {
    let spec = spec.trim();
    let parts: Vec<&str> = spec.split(':').collect();
    if parts.len() == 3 {
        let a: f64 = parts[0].trim().parse().map_err(|e| format!("start: {e}"))?;
        let b: f64 = parts[1].trim().parse().map_err(|e| format!("stop: {e}"))?;
        let n: usize = parts[2].trim().parse().map_err(|e| format!("count: {e}"))?;
        return match n {
            0 => Err("count must be positive".into()),
            1 => Ok(vec![a]),
            _ => Ok((0..n).map(|k| a + (b - a) * k as f64 / (n - 1) as f64).collect()),
        };
    }
    spec.split(',').map(|v| v.trim().parse::<f64>().map_err(|e| format!("`{v}`: {e}"))).collect()
}

/// Scenario with the sweep axis set to `value`.
pub fn apply_axis(base: &Scenario, axis: Axis, value: f64) -> Scenario {
    let mut s = base.clone();
    match axis {
        Axis::PScale => s.converters.iter_mut().for_each(|c| c.params.p_star *= value),
        Axis::ZGridScale => {
            if let Some(t) = s.topology.grid_impedance.as_mut() {
                t.z *= value;
            }
            for e in &mut s.events {
                if let EventKind::GridImpedanceSwitch { z } = &mut e.kind {
                    *z *= value;
                }
            }
        }
        Axis::DipRetained => {
            let mut found = false;
            for e in &mut s.events {
                if let EventKind::VoltageDip { retained, .. } = &mut e.kind {
                    *retained = value;
                    found = true;
                }
            }
            if !found {
                let at = s.events.iter().map(|e| e.time).fold(0.1f64, f64::max);
                s.events.push(crate::simulator::Event { time: at + if s.events.is_empty() { 0.0 } else { 0.1 }, kind: EventKind::VoltageDip { retained: value, duration: 0.15 } });
                s.t_end = s.t_end.max(at + 2.5);
            }
        }
    }
    s
}

#[derive(Debug, Clone, PartialEq, Serialize)]
pub struct SweepPoint {
    pub value: f64,
    pub min_margin: Option<f64>,
    pub certified: bool,
    pub status: String,
    pub final_deviation: Option<f64>,
    pub nu_non_increasing: Option<bool>,
    pub error: Option<String>,
}

pub fn sweep_point(base: &Scenario, axis: Axis, value: f64, simulate: bool, conservative: bool) -> SweepPoint {
    let s = apply_axis(base, axis, value);
    let mut point = SweepPoint {
        value,
        min_margin: None,
        certified: false,
        status: "evaluated".into(),
        final_deviation: None,
        nu_non_increasing: None,
        error: None,
    };
    if let Err(e) = s.validate() {
        point.status = "error".into();
        point.error = Some(e.to_string());
        return point;
    }
    let states = match event_networks(&s) {
        Ok(st) => st,
        Err(e) => {
            point.status = "error".into();
            point.error = Some(e.to_string());
            return point;
        }
    };
    let mut certified = true;
    let mut min_margin: Option<f64> = None;
    for (_, net, v_g) in states.iter().take(if simulate { states.len() } else { 1 }) {
        match certify_state(net, &s, *v_g, conservative) {
            Ok(r) => {
                certified &= r.certified;
                min_margin = match (min_margin, r.min_margin()) {
                    (Some(a), Some(b)) => Some(a.min(b)),
                    (a, b) => a.or(b),
                };
            }
            Err(e) => {
                certified = false;
                point.error = Some(e.to_string());
            }
        }
    }
    point.min_margin = min_margin;
    point.certified = certified;
    if simulate {
        match simulate_model(&s, Model::Rotated) {
            Ok(traj) => {
                let sum = summarize(&s, &traj, Model::Rotated);
                point.final_deviation = sum.final_deviation;
                point.nu_non_increasing = sum.nu_non_increasing;
                point.status = match sum.final_deviation {
                    Some(d) if d < RECOVERY_TOL => "recovered".into(),
                    _ => "not_recovered".into(),
                };
            }
            Err(SimulationError::Diverged { time, .. }) => {
                point.status = "diverged".into();
                point.error = Some(format!("diverged at t = {time} s"));
            }
            Err(e) => {
                point.status = "error".into();
                point.error = Some(e.to_string());
            }
        }
    }
    point
}

fn opt(v: Option<f64>) -> String {
    v.map_or(String::new(), |x| format!("{x:.12e}"))
}

pub fn sweep_csv(axis: Axis, points: &[SweepPoint]) -> String {
    let name = axis.to_possible_value().map(|v| v.get_name().to_string()).unwrap_or_default();
    let mut t = format!("{name},min_margin,certified,status,final_deviation,nu_non_increasing,error\n");
    for p in points {
        let nu = p.nu_non_increasing.map_or(String::new(), |b| b.to_string());
        let err = p.error.as_deref().unwrap_or("").replace([',', '\n'], ";");
        let _ = writeln!(t, "{:.12e},{},{},{},{},{nu},{err}", p.value, opt(p.min_margin), p.certified, p.status, opt(p.final_deviation));
    }
    t
}

#[allow(clippy::too_many_arguments)]
fn cmd_sweep(
    args: &ScenarioArgs,
    axis: Axis,
    values: &str,
    simulate: bool,
    conservative: bool,
    workers: Option<usize>,
    output: Option<PathBuf>,
    out: &mut dyn Write,
) -> Outcome {
    let values = parse_values(values).map_err(|e| fail(EXIT_INPUT, format!("--values: {e}")))?;
    let loaded = load(args)?;
    let simulate = simulate || axis == Axis::DipRetained;
    let workers = workers.filter(|&w| w > 0).unwrap_or_else(default_workers);
    let points = parallel_map(&values, workers, |&v| sweep_point(&loaded.scenario, axis, v, simulate, conservative));
    let table = sweep_csv(axis, &points);
    emit(out, &table)?;
    if let Some(path) = output {
        std::fs::write(&path, &table).map_err(|e| io_fail(&path, e))?;
    }
    Ok(EXIT_OK)
}

#[derive(Debug, Serialize)]
struct ReducedDump<'a> {
    converter_buses: &'a [String],
    phi: &'a [f64],
    y: Vec<Vec<Complex64>>,
    y_grid: &'a [Complex64],
    epsilon_net: Option<f64>,
    passive: bool,
}

fn cmd_reduce(args: &ScenarioArgs, output: Option<PathBuf>, out: &mut dyn Write) -> Outcome {
    let loaded = load(args)?;
    let s = &loaded.scenario;
    let net = s.network(s.initial_grid_z()).map_err(|e| fail(EXIT_INPUT, e.to_string()))?;
    let eps = net.passivity_index();
    let n = net.len();
    let dump = ReducedDump {
        converter_buses: &net.converter_buses,
        phi: &net.phi,
        y: (0..n).map(|i| (0..n).map(|j| net.y[(i, j)]).collect()).collect(),
        y_grid: &net.y_grid,
        epsilon_net: eps.as_ref().ok().copied(),
        passive: eps.is_ok(),
    };
    let mut t = String::new();
    let _ = writeln!(t, "reduced network: {n} converter terminals");
    for (i, row) in dump.y.iter().enumerate() {
        let cells: Vec<String> = row.iter().map(|z| format!("{:+.6}{:+.6}j", z.re, z.im)).collect();
        let _ = writeln!(t, "  Y[{}] ({}): {}", i + 1, dump.converter_buses[i], cells.join("  "));
    }
    for (i, z) in dump.y_grid.iter().enumerate() {
        let _ = writeln!(t, "  y[{}] = {:+.6}{:+.6}j   phi = {:.6} rad", i + 1, z.re, z.im, dump.phi[i]);
    }
    match &eps {
        Ok(e) => {
            let _ = writeln!(t, "epsilon_net = gSCR = {e:.6} pu");
        }
        Err(e) => {
            let _ = writeln!(t, "{e}");
        }
    }
    emit(out, &t)?;
    if let Some(path) = output {
        let body = serde_json::to_string_pretty(&dump).expect("serializable") + "\n";
        std::fs::write(&path, body).map_err(|e| io_fail(&path, e))?;
    }
    Ok(if eps.is_ok() { EXIT_OK } else { EXIT_NEGATIVE })
}

fn cmd_selftest(seed: u64, scale: usize, out: &mut dyn Write) -> Outcome {
    let results = run_selftest(&SelftestConfig { seed, scale: scale.max(1), delta_offset: 0.0 });
    let mut t = String::new();
    for r in &results {
        let tag = if r.passed { "PASS" } else { "FAIL" };
        let _ = writeln!(t, "{tag} {}/{}: {}", r.module, r.property, r.detail);
    }
    let failed = results.iter().filter(|r| !r.passed).count();
    let _ = writeln!(t, "{} checks, {failed} failed", results.len());
    emit(out, &t)?;
    Ok(if failed == 0 { EXIT_OK } else { EXIT_NEGATIVE })
}

#[cfg(test)]
mod tests {
    use super::*;

    fn bundled(name: &str) -> String {
        format!("{}/scenarios/{name}", env!("CARGO_MANIFEST_DIR"))
    }

    fn run_capture(args: &[&str]) -> (i32, String) {
        let mut buf = Vec::new();
        let code = run(std::iter::once("dvoc").chain(args.iter().copied()), &mut buf);
        (code, String::from_utf8(buf).unwrap())
    }

    #[test]
    fn values_grammar() {
        assert_eq!(parse_values("0.1:0.9:5").unwrap(), vec![0.1, 0.30000000000000004, 0.5, 0.7000000000000001, 0.9]);
        assert_eq!(parse_values("1, 2,3").unwrap(), vec![1.0, 2.0, 3.0]);
        assert_eq!(parse_values("4:5:1").unwrap(), vec![4.0]);
        assert!(parse_values("a,b").is_err());
        assert!(parse_values("0:1:0").is_err());
    }

    #[test]
    fn certify_single_converter() {
        let (code, text) = run_capture(&["certify", &bundled("single_converter.json")]);
        assert_eq!(code, EXIT_OK, "{text}");
        assert!(text.contains("epsilon_net = 6.324555"));
        let (code, _) = run_capture(&["certify", "--conservative", &bundled("single_converter.json")]);
        assert_eq!(code, EXIT_OK);
    }

    #[test]
    fn heavy_setpoint_is_not_certified() {
        let (code, text) = run_capture(&["certify", "--conservative", "--set", "converters.0.p_star=20", &bundled("single_converter.json")]);
        assert_eq!(code, EXIT_NEGATIVE, "{text}");
        assert!(text.contains("NOT CERTIFIED"));
    }

    #[test]
    fn input_errors_exit_two() {
        assert_eq!(run_capture(&["certify", "/nonexistent/file.json"]).0, EXIT_INPUT);
        assert_eq!(run_capture(&["frobnicate"]).0, EXIT_INPUT);
        assert_eq!(run_capture(&["certify", "--set", "nonsense", &bundled("single_converter.json")]).0, EXIT_INPUT);
    }

    #[test]
    fn apply_axis_inserts_dip() {
        let s = crate::scenario_io::load_scenario(bundled("single_converter.json")).unwrap();
        let d = apply_axis(&s, Axis::DipRetained, 0.5);
        assert_eq!(d.events.len(), 1);
        assert!(matches!(d.events[0].kind, EventKind::VoltageDip { retained, .. } if retained == 0.5));
        let z = apply_axis(&s, Axis::ZGridScale, 2.0);
        assert_eq!(z.topology.grid_impedance.unwrap().z, Complex64::new(0.1, 0.3));
    }

    #[test]
    fn p_scale_sweep_margin_is_monotone() {
        let s = crate::scenario_io::load_scenario(bundled("single_converter.json")).unwrap();
        let values = parse_values("0:20:9").unwrap();
        let pts: Vec<SweepPoint> = values.iter().map(|&v| sweep_point(&s, Axis::PScale, v, false, true)).collect();
        assert!(pts.windows(2).all(|w| w[1].min_margin.unwrap() < w[0].min_margin.unwrap()));
        assert!(pts[0].certified && !pts.last().unwrap().certified);
    }
}
