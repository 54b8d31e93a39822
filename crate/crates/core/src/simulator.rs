//! Closed-loop time-domain simulation with an event timeline, plus the
//! composite-Lyapunov monitor.
//!
//! The network is static, so it is eliminated inside the right-hand side and
//! the ODE state is just the `2N` real voltage coordinates. Integration is
//! split exactly at event times.

use std::collections::HashMap;

use num_complex::Complex64;
use serde::{Deserialize, Serialize};

use crate::certifier::{certify, CertificationReport, CertifyError};
use crate::equilibrium::{solve_equilibrium, EquilibriumError, EquilibriumPoint};
use crate::network::{augmented_network, GridTie, NetworkError, PlantTopology, ReducedNetwork};
use crate::node::{dvoc_rhs_rotated, dvoc_rhs_unrotated, storage_value, DvocParams, LimiterLatch};
use crate::numerics::{flatten, max_abs_diff, unflatten, ComplexMatrix, Integrator, NumericsError, StepControl};

/// Longest integration chunk while the limiter is active, in seconds.
pub const LIMITER_UPDATE_INTERVAL: f64 = 1e-3;

#[derive(Debug, Clone, thiserror::Error)]
pub enum SimulationError {
    #[error("invalid scenario: {0}")]
    InvalidScenario(String),
    #[error(transparent)]
    Network(#[from] NetworkError),
    #[error("initial equilibrium: {0}")]
    InitialEquilibrium(EquilibriumError),
    #[error("simulation diverged at t = {time} s")]
    Diverged { time: f64, partial: Box<Trajectory> },
    #[error(transparent)]
    Numerics(NumericsError),
}

/// Converter placement and its controller.
#[derive(Debug, Clone, PartialEq, Serialize, Deserialize)]
pub struct ConverterSpec {
    pub bus: String,
    pub params: DvocParams,
}

#[derive(Debug, Clone, PartialEq, Serialize, Deserialize)]
#[serde(tag = "kind", rename_all = "snake_case")]
pub enum EventKind {
    /// Grid voltage drops to `retained · v_g_nominal` for `duration` seconds.
    VoltageDip { retained: f64, duration: f64 },
    /// Replaces the grid impedance from this time on.
    GridImpedanceSwitch { z: Complex64 },
    LimiterMode { on: bool },
}

#[derive(Debug, Clone, PartialEq, Serialize, Deserialize)]
pub struct Event {
    pub time: f64,
    #[serde(flatten)]
    pub kind: EventKind,
}

#[derive(Debug, Clone, Copy, PartialEq, Serialize, Deserialize)]
pub struct SolverSettings {
    pub step: StepControl,
    /// Spacing of recorded samples (s).
    pub record_interval: f64,
}

impl Default for SolverSettings {
    fn default() -> Self {
        Self { step: StepControl::Fixed { h: 1e-4 }, record_interval: 1e-3 }
    }
}

#[derive(Debug, Clone, PartialEq)]
pub struct Scenario {
    pub name: String,
    pub topology: PlantTopology,
    pub converters: Vec<ConverterSpec>,
    pub v_g_nominal: f64,
    /// `ω₀ - ω_g` (rad/s), constant over the run.
    pub omega_delta: f64,
    pub events: Vec<Event>,
    pub t_end: f64,
    pub solver: SolverSettings,
    /// Limiter mode at `t = 0`.
    pub limiter: bool,
    /// Overrides the equilibrium start.
    pub initial_state: Option<Vec<Complex64>>,
}

impl Scenario {
    pub fn validate(&self) -> Result<(), SimulationError> {
        let bad = |m: String| Err(SimulationError::InvalidScenario(m));
        self.topology.validate()?;
        if !(self.t_end > 0.0) {
            return bad(format!("t_end must be positive, got {}", self.t_end));
        }
        if !(self.v_g_nominal > 0.0) {
            return bad("grid voltage must be positive".into());
        }
        if !(self.solver.record_interval > 0.0) {
            return bad("record_interval must be positive".into());
        }
        self.solver.step.validate().map_err(SimulationError::Numerics)?;
        let terminals = self.topology.converter_bus_ids();
        let mut used = std::collections::HashSet::new();
        for (k, c) in self.converters.iter().enumerate() {
            if !terminals.contains(&c.bus.as_str()) {
                return bad(format!("converter {k} sits on {}, which is not a converter-terminal bus", c.bus));
            }
            if !used.insert(c.bus.as_str()) {
                return bad(format!("bus {} hosts more than one converter", c.bus));
            }
            c.params.validate().map_err(|e| SimulationError::InvalidScenario(format!("converter {k}: {e}")))?;
        }
        if used.len() != terminals.len() {
            return bad("every converter-terminal bus needs a converter".into());
        }
        for w in self.events.windows(2) {
            if !(w[1].time > w[0].time) {
                return bad(format!("events not strictly time-ordered at t = {}", w[1].time));
            }
        }
        for e in &self.events {
            if !(e.time >= 0.0) {
                return bad(format!("event time {} is negative", e.time));
            }
            match &e.kind {
                EventKind::VoltageDip { retained, duration } => {
                    if !(*retained > 0.0 && *retained <= 1.0) || !(*duration > 0.0) {
                        return bad(format!("voltage dip at {} needs retained in (0, 1] and duration > 0", e.time));
                    }
                }
                EventKind::GridImpedanceSwitch { z } => {
                    if self.topology.grid_impedance.is_none() {
                        return bad("grid impedance switch requires a grid impedance in the topology".into());
                    }
                    if z.norm() == 0.0 || !z.re.is_finite() || !z.im.is_finite() {
                        return bad("grid impedance switch to a zero or non-finite impedance".into());
                    }
                }
                EventKind::LimiterMode { .. } => {}
            }
        }
        Ok(())
    }

    pub fn params(&self) -> Vec<DvocParams> {
        self.converters.iter().map(|c| c.params.clone()).collect()
    }

    /// Reduced network in converter-list order, optionally with a replaced grid impedance.
    pub fn network(&self, grid_z: Option<Complex64>) -> Result<ReducedNetwork, NetworkError> {
        let mut topo = self.topology.clone();
        if let (Some(z), Some(tie)) = (grid_z, topo.grid_impedance.as_mut()) {
            tie.z = z;
        }
        let natural: Vec<String> = topo.converter_bus_ids().iter().map(|s| s.to_string()).collect();
        let phi_by_bus: HashMap<&str, f64> = self.converters.iter().map(|c| (c.bus.as_str(), c.params.phi)).collect();
        let phi = natural.iter().map(|b| phi_by_bus.get(b.as_str()).copied().unwrap_or(0.0)).collect();
        let net = ReducedNetwork::from_topology(&topo, self.v_g_nominal, phi)?;
        let order: Vec<usize> = self
            .converters
            .iter()
            .map(|c| natural.iter().position(|b| *b == c.bus).expect("validated bus"))
            .collect();
        Ok(net.permuted(&order))
    }

    pub fn initial_grid_z(&self) -> Option<Complex64> {
        self.topology.grid_impedance.as_ref().map(|t: &GridTie| t.z)
    }
}

/// Which form of the converter law is integrated.
#[derive(Debug, Clone, Copy, PartialEq, Eq, Default)]
pub enum Model {
    #[default]
    Rotated,
    Unrotated,
}

/// Integration segment between consecutive events.
#[derive(Debug, Clone, PartialEq, Serialize, Deserialize)]
pub struct Segment {
    pub t_start: f64,
    pub t_end: f64,
    /// Inclusive sample index range.
    pub first_sample: usize,
    pub last_sample: usize,
    pub v_g: f64,
    pub grid_z: Option<Complex64>,
    pub limiter_on: bool,
    /// A nonzero virtual impedance was inserted somewhere in this segment.
    pub limiter_engaged: bool,
    pub equilibrium: Option<EquilibriumPoint>,
    pub report: Option<CertificationReport>,
    /// `nu` in this segment is measured against this segment's own equilibrium.
    pub monitored: bool,
}

#[derive(Debug, Clone, PartialEq, Default, Serialize, Deserialize)]
pub struct Trajectory {
    pub times: Vec<f64>,
    pub v: Vec<Vec<Complex64>>,
    /// Unrotated output currents.
    pub i: Vec<Vec<Complex64>>,
    /// Composite storage `Σ |v_k - v_s,k|²/(2η_k)` against the active segment's
    /// equilibrium, or the initial one where that is unavailable.
    pub nu: Vec<f64>,
    pub segments: Vec<Segment>,
}

impl Trajectory {
    pub fn len(&self) -> usize {
        self.times.len()
    }

    pub fn is_empty(&self) -> bool {
        self.times.is_empty()
    }

    pub fn converters(&self) -> usize {
        self.v.first().map_or(0, Vec::len)
    }

    /// Largest voltage gap between two trajectories sampled identically.
    pub fn max_voltage_discrepancy(&self, other: &Trajectory) -> f64 {
        if self.len() != other.len() {
            return f64::INFINITY;
        }
        self.v.iter().zip(&other.v).map(|(a, b)| max_abs_diff(a, b)).fold(0.0, f64::max)
    }
}

#[derive(Debug, Clone, Copy, PartialEq)]
enum Action {
    SetGridVoltage(f64),
    SetGridImpedance(Complex64),
    SetLimiter(bool),
}

fn timeline(s: &Scenario) -> Vec<(f64, Action)> {
    let mut out = Vec::new();
    for e in &s.events {
        match e.kind {
            EventKind::VoltageDip { retained, duration } => {
                out.push((e.time, Action::SetGridVoltage(retained * s.v_g_nominal)));
                out.push((e.time + duration, Action::SetGridVoltage(s.v_g_nominal)));
            }
            EventKind::GridImpedanceSwitch { z } => out.push((e.time, Action::SetGridImpedance(z))),
            EventKind::LimiterMode { on } => out.push((e.time, Action::SetLimiter(on))),
        }
    }
    out.sort_by(|a, b| a.0.total_cmp(&b.0));
    out
}

fn z_key(z: Option<Complex64>) -> (u64, u64) {
    z.map_or((0, 0), |z| (z.re.to_bits(), z.im.to_bits()))
}

/// Right-hand side over the flattened state for a fixed network and grid voltage.
struct ClosedLoop<'a> {
    y: ComplexMatrix,
    y_grid: Vec<Complex64>,
    rot: Vec<Complex64>,
    v_g: f64,
    omega_delta: f64,
    params: &'a [DvocParams],
    model: Model,
}

impl<'a> ClosedLoop<'a> {
    fn new(net: &ReducedNetwork, v_g: f64, omega_delta: f64, params: &'a [DvocParams], model: Model) -> Self {
        Self { y: net.y.clone(), y_grid: net.y_grid.clone(), rot: net.rotations(), v_g, omega_delta, params, model }
    }

    fn eval(&self, x: &[f64], dx: &mut [f64]) {
        let n = self.y_grid.len();
        for k in 0..n {
            let mut i = -self.y_grid[k] * self.v_g;
            for l in 0..n {
                i += self.y[(k, l)] * Complex64::new(x[2 * l], x[2 * l + 1]);
            }
            let v = Complex64::new(x[2 * k], x[2 * k + 1]);
            let d = match self.model {
                Model::Rotated => dvoc_rhs_rotated(v, self.rot[k] * i, self.omega_delta, &self.params[k]),
                Model::Unrotated => dvoc_rhs_unrotated(v, i, self.omega_delta, &self.params[k]),
            };
            dx[2 * k] = d.re;
            dx[2 * k + 1] = d.im;
        }
    }
}

fn composite_storage(v: &[Complex64], v_s: &[Complex64], params: &[DvocParams]) -> f64 {
    v.iter().zip(v_s).zip(params).map(|((a, b), p)| storage_value(*a, *b, p.eta)).sum()
}

/// Rotated closed loop of the dVOC nodes and the static network.
pub fn simulate(scenario: &Scenario) -> Result<Trajectory, SimulationError> {
    simulate_model(scenario, Model::Rotated)
}

/// Same run integrating the original-frame law against `i = Y v - y v_g`.
pub fn simulate_unrotated(scenario: &Scenario) -> Result<Trajectory, SimulationError> {
    simulate_model(scenario, Model::Unrotated)
}

pub fn simulate_model(scenario: &Scenario, model: Model) -> Result<Trajectory, SimulationError> {
    scenario.validate()?;
    let params = scenario.params();
    let n = params.len();
    let omega_delta = scenario.omega_delta;

    let mut networks: HashMap<(u64, u64), ReducedNetwork> = HashMap::new();
    let mut equilibria: HashMap<((u64, u64), u64), Option<EquilibriumPoint>> = HashMap::new();
    let mut network_for = |z: Option<Complex64>| -> Result<ReducedNetwork, NetworkError> {
        if let Some(net) = networks.get(&z_key(z)) {
            return Ok(net.clone());
        }
        let net = scenario.network(z)?;
        networks.insert(z_key(z), net.clone());
        Ok(net)
    };
    let mut equilibrium_for = |net: &ReducedNetwork, z: Option<Complex64>, v_g: f64| -> Option<EquilibriumPoint> {
        equilibria
            .entry((z_key(z), v_g.to_bits()))
            .or_insert_with(|| solve_equilibrium(net, &params, omega_delta, v_g, None).ok())
            .clone()
    };

    let mut grid_z = scenario.initial_grid_z();
    let mut v_g = scenario.v_g_nominal;
    let mut limiter_on = scenario.limiter;

    let base0 = network_for(grid_z)?;
    let initial_eq = equilibrium_for(&base0, grid_z, v_g);
    let mut x = match (&scenario.initial_state, &initial_eq) {
        (Some(x0), _) => {
            if x0.len() != n {
                return Err(SimulationError::InvalidScenario(format!("initial state has {} entries for {n} converters", x0.len())));
            }
            flatten(x0)
        }
        (None, Some(eq)) => flatten(&eq.v_s),
        (None, None) => {
            let err = solve_equilibrium(&base0, &params, omega_delta, v_g, None).expect_err("cached failure");
            return Err(SimulationError::InitialEquilibrium(err));
        }
    };
    let fallback_ref: Vec<Complex64> = initial_eq.as_ref().map_or_else(|| unflatten(&x), |e| e.v_s.clone());

    let mut traj = Trajectory::default();
    let mut stepper = Integrator::new(scenario.solver.step, 2 * n).map_err(SimulationError::Numerics)?;
    let actions = timeline(scenario);
    let mut ai = 0;
    let mut t = 0.0;
    let mut latches = vec![LimiterLatch::default(); n];

    while t < scenario.t_end || traj.is_empty() {
        while ai < actions.len() && actions[ai].0 <= t {
            match actions[ai].1 {
                Action::SetGridVoltage(v) => v_g = v,
                Action::SetGridImpedance(z) => grid_z = Some(z),
                Action::SetLimiter(on) => limiter_on = on,
            }
            ai += 1;
        }
        let t_next = actions.get(ai).map_or(scenario.t_end, |a| a.0.min(scenario.t_end));
        let base = network_for(grid_z)?;
        let eq = equilibrium_for(&base, grid_z, v_g);
        let report = eq.as_ref().and_then(|e| certify(&base, &params, Some(e)).ok()).or_else(|| match certify(&base, &params, None) {
            Ok(r) => Some(r),
            Err(CertifyError::NetworkNotPassive { .. }) | Err(_) => None,
        });
        let reference = eq.as_ref().map_or(fallback_ref.as_slice(), |e| e.v_s.as_slice()).to_vec();

        if !limiter_on {
            latches.iter_mut().for_each(|l| l.engaged = false);
        }
        let mut engaged_any = false;
        let mut active = base.clone();
        let mut current_zv = vec![Complex64::new(0.0, 0.0); n];
        let refresh_limiter = |x: &[f64], active: &mut ReducedNetwork, current_zv: &mut Vec<Complex64>, latches: &mut [LimiterLatch]| -> Result<bool, NetworkError> {
            let raw = base.unrotated_current(&unflatten(x), v_g)?;
            let zv: Vec<Complex64> = raw.iter().zip(&params).zip(latches.iter_mut()).map(|((i, p), l)| l.update(i.norm(), p)).collect();
            if zv != *current_zv {
                *active = augmented_network(&base, &zv)?;
                *current_zv = zv;
            }
            Ok(current_zv.iter().any(|z| z.norm() > 0.0))
        };
        if limiter_on {
            engaged_any |= refresh_limiter(&x, &mut active, &mut current_zv, &mut latches)?;
        }

        let record = |traj: &mut Traj<'_>, time: f64, x: &[f64], net: &ReducedNetwork| {
            let v = unflatten(x);
            let i = net.unrotated_current(&v, v_g).expect("dimension fixed");
            traj.nu.push(composite_storage(&v, traj.reference, &params));
            traj.times.push(time);
            traj.v.push(v);
            traj.i.push(i);
        };

        let first_sample = traj.times.len();
        let mut out = Traj { times: &mut traj.times, v: &mut traj.v, i: &mut traj.i, nu: &mut traj.nu, reference: &reference };
        record(&mut out, t, &x, &active);

        let chunk = if limiter_on {
            scenario.solver.record_interval.min(LIMITER_UPDATE_INTERVAL)
        } else {
            scenario.solver.record_interval
        };
        let seg_len = t_next - t;
        let chunks = if seg_len > 0.0 { ((seg_len / chunk) - 1e-9).ceil().max(1.0) as usize } else { 0 };
        let t_seg = t;
        for m in 0..chunks {
            let ta = t_seg + m as f64 * chunk;
            let tb = if m + 1 == chunks { t_next } else { t_seg + (m + 1) as f64 * chunk };
            let rhs_sys = ClosedLoop::new(&active, v_g, omega_delta, &params, model);
            let mut rhs = |_t: f64, x: &[f64], dx: &mut [f64]| rhs_sys.eval(x, dx);
            if let Err(e) = stepper.advance(&mut rhs, ta, tb, &mut x, |_, _| {}) {
                let time = match e {
                    NumericsError::IntegrationAborted { time, .. } => time,
                    _ => ta,
                };
                drop(out);
                traj.segments.push(Segment {
                    t_start: t_seg,
                    t_end: time,
                    first_sample,
                    last_sample: traj.times.len() - 1,
                    v_g,
                    grid_z,
                    limiter_on,
                    limiter_engaged: engaged_any,
                    equilibrium: eq.clone(),
                    report: report.clone(),
                    monitored: false,
                });
                return Err(SimulationError::Diverged { time, partial: Box::new(traj) });
            }
            record(&mut out, tb, &x, &active);
            if limiter_on && m + 1 < chunks {
                engaged_any |= refresh_limiter(&x, &mut active, &mut current_zv, &mut latches)?;
            }
        }
        drop(out);
        traj.segments.push(Segment {
            t_start: t_seg,
            t_end: t_next,
            first_sample,
            last_sample: traj.times.len() - 1,
            v_g,
            grid_z,
            limiter_on,
            limiter_engaged: engaged_any,
            monitored: eq.is_some() && !engaged_any,
            equilibrium: eq,
            report,
        });
        t = t_next;
        if t >= scenario.t_end {
            break;
        }
    }
    Ok(traj)
}

struct Traj<'a> {
    times: &'a mut Vec<f64>,
    v: &'a mut Vec<Vec<Complex64>>,
    i: &'a mut Vec<Vec<Complex64>>,
    nu: &'a mut Vec<f64>,
    reference: &'a [Complex64],
}

/// An interval where `ν` grew by more than the integration-error budget.
#[derive(Debug, Clone, PartialEq, Serialize, Deserialize)]
pub struct NuViolation {
    pub t_from: f64,
    pub t_to: f64,
    pub increase: f64,
    pub budget: f64,
}

#[derive(Debug, Clone, PartialEq, Serialize, Deserialize)]
pub struct LyapunovReport {
    pub nu: Vec<f64>,
    pub violations: Vec<NuViolation>,
}

impl LyapunovReport {
    pub fn non_increasing(&self) -> bool {
        self.violations.is_empty()
    }
}

/// Budget for a sample-to-sample increase of `ν`.
pub fn nu_tolerance(nu: f64) -> f64 {
    1e-7 + 1e-4 * nu
}

/// `ν(t) = Σ_k |v_k(t) - v_s,k|²/(2η_k)` over samples `range` of `traj`,
/// flagging every step where it rises by more than [`nu_tolerance`].
pub fn lyapunov_monitor(
    traj: &Trajectory,
    equilibrium: &EquilibriumPoint,
    params: &[DvocParams],
    range: std::ops::RangeInclusive<usize>,
) -> Result<LyapunovReport, SimulationError> {
    if equilibrium.v_s.len() != params.len() || traj.converters() != params.len() {
        return Err(SimulationError::InvalidScenario("equilibrium, trajectory and parameter sizes differ".into()));
    }
    if traj.is_empty() {
        return Ok(LyapunovReport { nu: vec![], violations: vec![] });
    }
    let end = (*range.end()).min(traj.len() - 1);
    let start = *range.start();
    let nu: Vec<f64> = (start..=end).map(|s| composite_storage(&traj.v[s], &equilibrium.v_s, params)).collect();
    let violations = nu
        .windows(2)
        .enumerate()
        .filter_map(|(j, w)| {
            let budget = nu_tolerance(w[0]);
            (w[1] - w[0] > budget).then(|| NuViolation {
                t_from: traj.times[start + j],
                t_to: traj.times[start + j + 1],
                increase: w[1] - w[0],
                budget,
            })
        })
        .collect();
    Ok(LyapunovReport { nu, violations })
}

/// Per-segment Lyapunov verdict.
#[derive(Debug, Clone, PartialEq, Serialize, Deserialize)]
pub struct SegmentVerdict {
    pub index: usize,
    pub t_start: f64,
    pub t_end: f64,
    pub certified: bool,
    pub monitored: bool,
    pub non_increasing: Option<bool>,
    pub violations: usize,
}

/// Runs [`lyapunov_monitor`] on every segment that has its own equilibrium;
/// `non_increasing` is `None` for unmonitored segments.
pub fn monitor_segments(traj: &Trajectory, params: &[DvocParams]) -> Vec<SegmentVerdict> {
    traj.segments
        .iter()
        .enumerate()
        .map(|(index, s)| {
            let certified = s.report.as_ref().is_some_and(|r| r.certified);
            let rep = match (&s.equilibrium, s.monitored) {
                (Some(eq), true) => lyapunov_monitor(traj, eq, params, s.first_sample..=s.last_sample).ok(),
                _ => None,
            };
            SegmentVerdict {
                index,
                t_start: s.t_start,
                t_end: s.t_end,
                certified,
                monitored: rep.is_some(),
                non_increasing: rep.as_ref().map(LyapunovReport::non_increasing),
                violations: rep.map_or(0, |r| r.violations.len()),
            }
        })
        .collect()
}

#[derive(Debug, Clone, PartialEq, Serialize, Deserialize)]
pub struct Overcurrent {
    pub converter: usize,
    pub first_exceedance: f64,
    pub peak: f64,
}

/// Converters whose current magnitude exceeds `i_max[k]` at some sample.
pub fn overcurrent_scan(traj: &Trajectory, i_max: &[f64]) -> Vec<Overcurrent> {
    let mut out = Vec::new();
    for (k, &limit) in i_max.iter().enumerate().take(traj.converters()) {
        let mut first = None;
        let mut peak = 0.0f64;
        for (s, i) in traj.i.iter().enumerate() {
            let m = i[k].norm();
            peak = peak.max(m);
            if m > limit && first.is_none() {
                first = Some(traj.times[s]);
            }
        }
        if let Some(first_exceedance) = first {
            out.push(Overcurrent { converter: k, first_exceedance, peak });
        }
    }
    out
}

/// Peak current magnitude per converter.
pub fn peak_currents(traj: &Trajectory) -> Vec<f64> {
    (0..traj.converters())
        .map(|k| traj.i.iter().map(|i| i[k].norm()).fold(0.0, f64::max))
        .collect()
}

/// `max_k |v_k(t_end) - v_s,k|` against the last segment's equilibrium.
pub fn final_deviation(traj: &Trajectory) -> Option<f64> {
    let seg = traj.segments.last()?;
    let eq = seg.equilibrium.as_ref()?;
    Some(max_abs_diff(traj.v.last()?, &eq.v_s))
}

/// Network states the plant passes through: the pre-event network, and for
/// every event the network in force right after it. With the limiter on, the
/// virtual impedances follow from the currents the pre-event equilibrium
/// would draw at that instant.
pub fn event_networks(scenario: &Scenario) -> Result<Vec<(String, ReducedNetwork, f64)>, SimulationError> {
    scenario.validate()?;
    let params = scenario.params();
    let base = scenario.network(scenario.initial_grid_z())?;
    let pre = solve_equilibrium(&base, &params, scenario.omega_delta, scenario.v_g_nominal, None).ok();
    let mut grid_z = scenario.initial_grid_z();
    let mut v_g = scenario.v_g_nominal;
    let mut limiter = scenario.limiter;
    let mut out = vec![("pre-event".to_string(), base.clone(), v_g)];
    for (t, action) in timeline(scenario) {
        if t >= scenario.t_end {
            break;
        }
        match action {
            Action::SetGridVoltage(v) => v_g = v,
            Action::SetGridImpedance(z) => grid_z = Some(z),
            Action::SetLimiter(on) => limiter = on,
        }
        let mut net = scenario.network(grid_z)?;
        if limiter {
            if let Some(eq) = &pre {
                let raw = net.unrotated_current(&eq.v_s, v_g)?;
                let zv: Vec<Complex64> = raw.iter().zip(&params).map(|(i, p)| LimiterLatch::default().update(i.norm(), p)).collect();
                net = augmented_network(&net, &zv)?;
            }
        }
        out.push((format!("t={t}"), net, v_g));
    }
    Ok(out)
}
