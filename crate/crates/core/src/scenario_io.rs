//! Scenario files (JSON, schema `dvoc-scenario/1`), trajectory CSV and report output.
//!
//! Physical quantities carry an explicit unit tag, `{"value": 0.1153, "unit": "ohm_per_km"}`.
//! Per-unit quantities may also be given as bare numbers.

use std::f64::consts::{FRAC_PI_2, SQRT_2};
use std::fmt::Write as _;
use std::fs;
use std::io::Write as _;
use std::path::{Path, PathBuf};

use num_complex::Complex64;
use rand::{Rng, SeedableRng};
use rand_chacha::ChaCha8Rng;
use serde::{Deserialize, Serialize};
use serde_json::Value;

use crate::certifier::CertificationReport;
use crate::network::{line_impedance_pu, Branch, Bus, GridTie, PerUnitBase, PlantTopology};
use crate::node::DvocParams;
use crate::numerics::StepControl;
use crate::simulator::{ConverterSpec, Event, EventKind, Scenario, SolverSettings, Trajectory};

pub const SCHEMA: &str = "dvoc-scenario/1";
pub const MATCH_IMPEDANCE_ANGLE: &str = "match-impedance-angle";

#[derive(Debug, thiserror::Error)]
pub enum LoadError {
    #[error("{path}: {source}")]
    Io { path: PathBuf, source: std::io::Error },
    #[error("syntax error at line {line}, column {column}: {message}")]
    Syntax { line: usize, column: usize, message: String },
    #[error("schema violation at `{field}`{}: {message}", location(*.line, *.column))]
    Schema { field: String, line: usize, column: usize, message: String },
    #[error("`{field}` references unknown bus `{bus}`")]
    DanglingBus { field: String, bus: String },
    #[error("unit mismatch at `{field}`: expected {expected}, found {found}")]
    Unit { field: String, expected: String, found: String },
    #[error("`{field}`: {message}")]
    Invalid { field: String, message: String },
    #[error("override `{0}`: {1}")]
    Override(String, String),
}

fn location(line: usize, column: usize) -> String {
    if line == 0 {
        String::new()
    } else {
        format!(" (line {line}, column {column})")
    }
}

fn invalid(field: impl Into<String>, message: impl Into<String>) -> LoadError {
    LoadError::Invalid { field: field.into(), message: message.into() }
}

#[derive(Debug, Clone, Copy, PartialEq, Eq, Serialize, Deserialize)]
#[serde(rename_all = "snake_case")]
pub enum Unit {
    Pu,
    OhmPerKm,
    HenryPerKm,
    Km,
    Rad,
    Deg,
}

impl Unit {
    fn name(self) -> &'static str {
        match self {
            Unit::Pu => "pu",
            Unit::OhmPerKm => "ohm_per_km",
            Unit::HenryPerKm => "henry_per_km",
            Unit::Km => "km",
            Unit::Rad => "rad",
            Unit::Deg => "deg",
        }
    }
}

#[derive(Debug, Clone, Copy, PartialEq, Serialize, Deserialize)]
#[serde(deny_unknown_fields)]
pub struct Quantity {
    pub value: f64,
    pub unit: Unit,
}

impl Quantity {
    pub fn new(value: f64, unit: Unit) -> Self {
        Self { value, unit }
    }

    fn expect(&self, field: &str, unit: Unit) -> Result<f64, LoadError> {
        if self.unit == unit {
            Ok(self.value)
        } else {
            Err(LoadError::Unit { field: field.into(), expected: unit.name().into(), found: self.unit.name().into() })
        }
    }

    fn angle(&self, field: &str) -> Result<f64, LoadError> {
        match self.unit {
            Unit::Rad => Ok(self.value),
            Unit::Deg => Ok(self.value.to_radians()),
            other => Err(LoadError::Unit { field: field.into(), expected: "rad or deg".into(), found: other.name().into() }),
        }
    }
}

/// A per-unit value: bare number or `{value, unit: "pu"}`.
#[derive(Debug, Clone, Copy, PartialEq, Serialize, Deserialize)]
#[serde(untagged)]
pub enum PuValue {
    Number(f64),
    Tagged(Quantity),
}

impl PuValue {
    fn get(&self, field: &str) -> Result<f64, LoadError> {
        match self {
            PuValue::Number(v) => Ok(*v),
            PuValue::Tagged(q) => q.expect(field, Unit::Pu),
        }
    }
}

#[derive(Debug, Clone, PartialEq, Serialize, Deserialize)]
#[serde(tag = "kind", rename_all = "snake_case", deny_unknown_fields)]
pub enum ImpedanceSpec {
    /// Per-unit on the system base, or on `base_va` when given.
    Pu {
        r: f64,
        x: f64,
        #[serde(default, skip_serializing_if = "Option::is_none")]
        base_va: Option<f64>,
    },
    /// Physical line constants.
    Line { r: Quantity, l: Quantity, length: Quantity },
}

impl ImpedanceSpec {
    pub fn pu(z: Complex64) -> Self {
        ImpedanceSpec::Pu { r: z.re, x: z.im, base_va: None }
    }

    fn resolve(&self, field: &str, base: &PerUnitBase) -> Result<Complex64, LoadError> {
        match self {
            ImpedanceSpec::Pu { r, x, base_va: None } => Ok(Complex64::new(*r, *x)),
            ImpedanceSpec::Pu { r, x, base_va: Some(s) } => {
                if !(*s > 0.0) {
                    return Err(invalid(format!("{field}.base_va"), "must be positive"));
                }
                Ok(Complex64::new(*r, *x) * (base.s_base_va / s))
            }
            ImpedanceSpec::Line { r, l, length } => {
                let r = r.expect(&format!("{field}.r"), Unit::OhmPerKm)?;
                let l = l.expect(&format!("{field}.l"), Unit::HenryPerKm)?;
                let len = length.expect(&format!("{field}.length"), Unit::Km)?;
                if !(len > 0.0) {
                    return Err(invalid(format!("{field}.length"), "must be positive"));
                }
                Ok(line_impedance_pu(r, l, len, base))
            }
        }
    }
}

#[derive(Debug, Clone, PartialEq, Serialize, Deserialize)]
#[serde(deny_unknown_fields)]
pub struct BaseSection {
    pub s_base_va: f64,
    pub v_base_v: f64,
    pub f0_hz: f64,
}

#[derive(Debug, Clone, PartialEq, Serialize, Deserialize)]
#[serde(deny_unknown_fields)]
pub struct BranchEntry {
    pub from: String,
    pub to: String,
    pub z: ImpedanceSpec,
}

#[derive(Debug, Clone, PartialEq, Serialize, Deserialize)]
#[serde(deny_unknown_fields)]
pub struct TopologySection {
    pub buses: Vec<Bus>,
    #[serde(default)]
    pub branches: Vec<BranchEntry>,
}

#[derive(Debug, Clone, PartialEq, Serialize, Deserialize)]
#[serde(untagged)]
pub enum PhiSpec {
    Keyword(String),
    Value(Quantity),
}

/// Controller fields; anything omitted falls back to `converter_defaults`,
/// then to built-in defaults.
#[derive(Debug, Clone, Default, PartialEq, Serialize, Deserialize)]
#[serde(deny_unknown_fields)]
pub struct ConverterEntry {
    #[serde(default, skip_serializing_if = "Option::is_none")]
    pub bus: Option<String>,
    /// rad/s
    #[serde(default, skip_serializing_if = "Option::is_none")]
    pub eta: Option<f64>,
    #[serde(default, skip_serializing_if = "Option::is_none")]
    pub alpha: Option<PuValue>,
    #[serde(default, skip_serializing_if = "Option::is_none")]
    pub phi: Option<PhiSpec>,
    #[serde(default, skip_serializing_if = "Option::is_none")]
    pub p_star: Option<PuValue>,
    #[serde(default, skip_serializing_if = "Option::is_none")]
    pub q_star: Option<PuValue>,
    #[serde(default, skip_serializing_if = "Option::is_none")]
    pub v_star: Option<PuValue>,
    /// rad/s; defaults to `2π f0`.
    #[serde(default, skip_serializing_if = "Option::is_none")]
    pub omega0: Option<f64>,
    #[serde(default, skip_serializing_if = "Option::is_none")]
    pub i_max: Option<PuValue>,
    #[serde(default, skip_serializing_if = "Option::is_none")]
    pub kv: Option<PuValue>,
    #[serde(default, skip_serializing_if = "Option::is_none")]
    pub theta_v: Option<Quantity>,
}

#[derive(Debug, Clone, PartialEq, Serialize, Deserialize)]
#[serde(deny_unknown_fields)]
pub struct GridSection {
    /// Plant bus the grid impedance attaches to.
    #[serde(default, skip_serializing_if = "Option::is_none")]
    pub pcc: Option<String>,
    #[serde(default, skip_serializing_if = "Option::is_none")]
    pub z: Option<ImpedanceSpec>,
    pub v_g: PuValue,
    /// `ω₀ - ω_g` in rad/s.
    #[serde(default)]
    pub omega_delta: f64,
}

#[derive(Debug, Clone, PartialEq, Serialize, Deserialize)]
#[serde(tag = "kind", rename_all = "snake_case", deny_unknown_fields)]
pub enum EventEntry {
    VoltageDip { time: f64, retained: PuValue, duration: f64 },
    GridImpedanceSwitch { time: f64, z: ImpedanceSpec },
    LimiterMode { time: f64, on: bool },
}

impl EventEntry {
    fn time(&self) -> f64 {
        match self {
            EventEntry::VoltageDip { time, .. }
            | EventEntry::GridImpedanceSwitch { time, .. }
            | EventEntry::LimiterMode { time, .. } => *time,
        }
    }
}

fn default_record_interval() -> f64 {
    1e-3
}

#[derive(Debug, Clone, PartialEq, Serialize, Deserialize)]
#[serde(deny_unknown_fields)]
pub struct SolverSection {
    pub t_end: f64,
    #[serde(default)]
    pub step: StepControl,
    #[serde(default = "default_record_interval")]
    pub record_interval: f64,
    #[serde(default)]
    pub limiter: bool,
}

#[derive(Debug, Clone, Copy, PartialEq, Eq, Default, Serialize, Deserialize)]
#[serde(rename_all = "snake_case")]
pub enum ReportFormat {
    #[default]
    Human,
    Json,
}

#[derive(Debug, Clone, Default, PartialEq, Serialize, Deserialize)]
#[serde(deny_unknown_fields)]
pub struct OutputsSection {
    #[serde(default, skip_serializing_if = "Option::is_none")]
    pub csv: Option<String>,
    #[serde(default, skip_serializing_if = "Option::is_none")]
    pub report: Option<String>,
    #[serde(default)]
    pub report_format: ReportFormat,
}

/// Seeded setpoints for converters that leave both `p_star` and `q_star` unset.
#[derive(Debug, Clone, PartialEq, Serialize, Deserialize)]
#[serde(deny_unknown_fields)]
pub struct RandomSetpoints {
    pub seed: u64,
}

#[derive(Debug, Clone, PartialEq, Serialize, Deserialize)]
#[serde(deny_unknown_fields)]
pub struct ScenarioFile {
    pub schema: String,
    #[serde(default)]
    pub name: String,
    #[serde(default, skip_serializing_if = "Option::is_none")]
    pub base: Option<BaseSection>,
    pub topology: TopologySection,
    #[serde(default, skip_serializing_if = "Option::is_none")]
    pub converter_defaults: Option<ConverterEntry>,
    pub converters: Vec<ConverterEntry>,
    #[serde(default, skip_serializing_if = "Option::is_none")]
    pub random_setpoints: Option<RandomSetpoints>,
    pub grid: GridSection,
    #[serde(default)]
    pub events: Vec<EventEntry>,
    pub solver: SolverSection,
    #[serde(default, skip_serializing_if = "Option::is_none")]
    pub initial_state: Option<Vec<Complex64>>,
    #[serde(default, skip_serializing_if = "Option::is_none")]
    pub outputs: Option<OutputsSection>,
}

#[derive(Debug, Clone, PartialEq)]
pub struct LoadedScenario {
    pub scenario: Scenario,
    pub outputs: OutputsSection,
}

/// `key=value` override addressed by a dotted path, e.g. `converters.3.p_star=0.8`.
#[derive(Debug, Clone, PartialEq)]
pub struct Override {
    pub path: Vec<String>,
    pub value: Value,
}

impl std::str::FromStr for Override {
    type Err = LoadError;

    fn from_str(s: &str) -> Result<Self, LoadError> {
        let (key, raw) = s.split_once('=').ok_or_else(|| LoadError::Override(s.into(), "expected key=value".into()))?;
        let path: Vec<String> = key.trim().split('.').map(str::to_string).collect();
        if path.iter().any(String::is_empty) {
            return Err(LoadError::Override(s.into(), "empty path component".into()));
        }
        let raw = raw.trim();
        let value = serde_json::from_str(raw).unwrap_or_else(|_| Value::String(raw.to_string()));
        Ok(Override { path, value })
    }
}

/// Applies overrides in order. A number written onto a unit-tagged quantity
/// replaces its `value` and keeps the unit.
pub fn apply_overrides(doc: &mut Value, overrides: &[Override]) -> Result<(), LoadError> {
    for o in overrides {
        let name = o.path.join(".");
        let mut node = &mut *doc;
        for (depth, key) in o.path.iter().enumerate() {
            let last = depth + 1 == o.path.len();
            node = match node {
                Value::Array(items) => {
                    let idx: usize = key.parse().map_err(|_| LoadError::Override(name.clone(), format!("`{key}` is not an index")))?;
                    let len = items.len();
                    items.get_mut(idx).ok_or_else(|| LoadError::Override(name.clone(), format!("index {idx} out of range ({len})")))?
                }
                Value::Object(map) => {
                    if last {
                        map.entry(key.clone()).or_insert(Value::Null)
                    } else {
                        map.get_mut(key).ok_or_else(|| LoadError::Override(name.clone(), format!("no field `{key}`")))?
                    }
                }
                _ => return Err(LoadError::Override(name.clone(), format!("`{key}` is below a scalar"))),
            };
        }
        match (node, &o.value) {
            (Value::Object(q), Value::Number(_)) if q.contains_key("unit") && q.contains_key("value") => {
                q.insert("value".into(), o.value.clone());
            }
            (slot, v) => *slot = v.clone(),
        }
    }
    Ok(())
}

fn schema_error<E: std::fmt::Display>(err: serde_path_to_error::Error<E>, line: usize, column: usize) -> LoadError {
    let field = err.path().to_string();
    LoadError::Schema { field, line, column, message: err.into_inner().to_string() }
}

/// Parses and validates a scenario document.
pub fn parse_scenario(text: &str, overrides: &[Override]) -> Result<LoadedScenario, LoadError> {
    let file: ScenarioFile = if overrides.is_empty() {
        let de = &mut serde_json::Deserializer::from_str(text);
        match serde_path_to_error::deserialize(de) {
            Ok(f) => f,
            Err(e) if e.inner().is_syntax() || e.inner().is_eof() => {
                let inner = e.into_inner();
                return Err(LoadError::Syntax { line: inner.line(), column: inner.column(), message: inner.to_string() });
            }
            Err(e) => {
                let (line, column) = (e.inner().line(), e.inner().column());
                return Err(schema_error(e, line, column));
            }
        }
    } else {
        let mut doc: Value = serde_json::from_str(text)
            .map_err(|e| LoadError::Syntax { line: e.line(), column: e.column(), message: e.to_string() })?;
        apply_overrides(&mut doc, overrides)?;
        serde_path_to_error::deserialize(doc).map_err(|e| schema_error(e, 0, 0))?
    };
    resolve(&file)
}

pub fn load_scenario(path: impl AsRef<Path>) -> Result<Scenario, LoadError> {
    load_scenario_with(path, &[]).map(|l| l.scenario)
}

pub fn load_scenario_with(path: impl AsRef<Path>, overrides: &[Override]) -> Result<LoadedScenario, LoadError> {
    let path = path.as_ref();
    let text = fs::read_to_string(path).map_err(|source| LoadError::Io { path: path.to_path_buf(), source })?;
    parse_scenario(&text, overrides)
}

/// Draws `p*, q*` uniform on `[0, √2]`; a pair with apparent power above 1 is
/// rescaled onto the unit circle.
pub fn random_setpoints(seed: u64, n: usize) -> Vec<(f64, f64)> {
    let mut rng = ChaCha8Rng::seed_from_u64(seed);
    (0..n)
        .map(|_| {
            let p = SQRT_2 * rng.random::<f64>();
            let q = SQRT_2 * rng.random::<f64>();
            let s = p.hypot(q);
            if s > 1.0 {
                (p / s, q / s)
            } else {
                (p, q)
            }
        })
        .collect()
}

fn resolve(file: &ScenarioFile) -> Result<LoadedScenario, LoadError> {
    if file.schema != SCHEMA {
        return Err(LoadError::Schema {
            field: "schema".into(),
            line: 0,
            column: 0,
            message: format!("unsupported schema `{}`, expected `{SCHEMA}`", file.schema),
        });
    }
    let base = match &file.base {
        Some(b) => {
            if !(b.s_base_va > 0.0 && b.v_base_v > 0.0 && b.f0_hz > 0.0) {
                return Err(invalid("base", "base quantities must be positive"));
            }
            PerUnitBase { s_base_va: b.s_base_va, v_base_v: b.v_base_v, f0_hz: b.f0_hz }
        }
        None => PerUnitBase::default(),
    };

    let known: std::collections::HashSet<&str> = file.topology.buses.iter().map(|b| b.id.as_str()).collect();
    let check_bus = |field: String, bus: &str| {
        if known.contains(bus) {
            Ok(())
        } else {
            Err(LoadError::DanglingBus { field, bus: bus.into() })
        }
    };

    let mut branches = Vec::with_capacity(file.topology.branches.len());
    for (k, b) in file.topology.branches.iter().enumerate() {
        check_bus(format!("topology.branches[{k}].from"), &b.from)?;
        check_bus(format!("topology.branches[{k}].to"), &b.to)?;
        branches.push(Branch { from: b.from.clone(), to: b.to.clone(), z: b.z.resolve(&format!("topology.branches[{k}].z"), &base)? });
    }

    let grid_impedance = match (&file.grid.pcc, &file.grid.z) {
        (Some(pcc), Some(z)) => {
            check_bus("grid.pcc".into(), pcc)?;
            Some(GridTie { pcc: pcc.clone(), z: z.resolve("grid.z", &base)? })
        }
        (None, None) => None,
        _ => return Err(invalid("grid", "`pcc` and `z` must be given together")),
    };
    let topology = PlantTopology { buses: file.topology.buses.clone(), branches, grid_impedance, base };
    topology.validate().map_err(|e| invalid("topology", e.to_string()))?;

    let v_g = file.grid.v_g.get("grid.v_g")?;
    let random = file.random_setpoints.as_ref().map(|r| random_setpoints(r.seed, file.converters.len()));
    let defaults = file.converter_defaults.clone().unwrap_or_default();
    if defaults.bus.is_some() {
        return Err(invalid("converter_defaults.bus", "defaults cannot name a bus"));
    }
    let mut converters = Vec::with_capacity(file.converters.len());
    for (k, entry) in file.converters.iter().enumerate() {
        let field = format!("converters[{k}]");
        let bus = entry.bus.clone().ok_or_else(|| invalid(format!("{field}.bus"), "missing bus"))?;
        check_bus(format!("{field}.bus"), &bus)?;
        let pick = |own: &Option<PuValue>, def: &Option<PuValue>, name: &str, fallback: f64| -> Result<f64, LoadError> {
            match own {
                Some(v) => v.get(&format!("{field}.{name}")),
                None => def.as_ref().map_or(Ok(fallback), |v| v.get(&format!("converter_defaults.{name}"))),
            }
        };
        let builtin = DvocParams { omega0: base.omega0(), ..DvocParams::default() };
        let (mut p_default, mut q_default) = (builtin.p_star, builtin.q_star);
        if let Some(draws) = &random {
            if entry.p_star.is_none() && entry.q_star.is_none() {
                (p_default, q_default) = draws[k];
            }
        }
        let phi_spec = entry.phi.as_ref().or(defaults.phi.as_ref());
        let phi_field = if entry.phi.is_some() { format!("{field}.phi") } else { "converter_defaults.phi".into() };
        let phi = match phi_spec {
            None => builtin.phi,
            Some(PhiSpec::Value(q)) => q.angle(&phi_field)?,
            Some(PhiSpec::Keyword(s)) if s == MATCH_IMPEDANCE_ANGLE => {
                let z = topology.path_impedance_to_grid(&bus).map_err(|e| invalid(&phi_field, e.to_string()))?;
                z.arg().clamp(0.0, FRAC_PI_2)
            }
            Some(PhiSpec::Keyword(s)) => {
                return Err(invalid(phi_field, format!("expected an angle or `{MATCH_IMPEDANCE_ANGLE}`, found `{s}`")));
            }
        };
        let theta_v = match (&entry.theta_v, &defaults.theta_v) {
            (Some(q), _) => q.angle(&format!("{field}.theta_v"))?,
            (None, Some(q)) => q.angle("converter_defaults.theta_v")?,
            (None, None) => builtin.theta_v,
        };
        let params = DvocParams {
            eta: entry.eta.or(defaults.eta).unwrap_or(builtin.eta),
            alpha: pick(&entry.alpha, &defaults.alpha, "alpha", builtin.alpha)?,
            phi,
            p_star: pick(&entry.p_star, &defaults.p_star, "p_star", p_default)?,
            q_star: pick(&entry.q_star, &defaults.q_star, "q_star", q_default)?,
            v_star: pick(&entry.v_star, &defaults.v_star, "v_star", builtin.v_star)?,
            omega0: entry.omega0.or(defaults.omega0).unwrap_or(builtin.omega0),
            i_max: pick(&entry.i_max, &defaults.i_max, "i_max", builtin.i_max)?,
            kv: pick(&entry.kv, &defaults.kv, "kv", builtin.kv)?,
            theta_v,
        };
        params.validate().map_err(|e| invalid(&field, e.to_string()))?;
        converters.push(ConverterSpec { bus, params });
    }

    let mut events = Vec::with_capacity(file.events.len());
    for (k, e) in file.events.iter().enumerate() {
        let field = format!("events[{k}]");
        if k > 0 && !(e.time() > file.events[k - 1].time()) {
            return Err(invalid(format!("{field}.time"), "events must be strictly time-ordered"));
        }
        let kind = match e {
            EventEntry::VoltageDip { retained, duration, .. } => {
                EventKind::VoltageDip { retained: retained.get(&format!("{field}.retained"))?, duration: *duration }
            }
            EventEntry::GridImpedanceSwitch { z, .. } => EventKind::GridImpedanceSwitch { z: z.resolve(&format!("{field}.z"), &base)? },
            EventEntry::LimiterMode { on, .. } => EventKind::LimiterMode { on: *on },
        };
        events.push(Event { time: e.time(), kind });
    }

    let scenario = Scenario {
        name: file.name.clone(),
        topology,
        converters,
        v_g_nominal: v_g,
        omega_delta: file.grid.omega_delta,
        events,
        t_end: file.solver.t_end,
        solver: SolverSettings { step: file.solver.step, record_interval: file.solver.record_interval },
        limiter: file.solver.limiter,
        initial_state: file.initial_state.clone(),
    };
    scenario.validate().map_err(|e| invalid("scenario", e.to_string()))?;
    Ok(LoadedScenario { scenario, outputs: file.outputs.clone().unwrap_or_default() })
}

/// Fully explicit per-unit document for a validated scenario.
pub fn scenario_to_file(s: &Scenario) -> ScenarioFile {
    let pu = PuValue::Number;
    let base = s.topology.base;
    ScenarioFile {
        schema: SCHEMA.into(),
        name: s.name.clone(),
        base: Some(BaseSection { s_base_va: base.s_base_va, v_base_v: base.v_base_v, f0_hz: base.f0_hz }),
        topology: TopologySection {
            buses: s.topology.buses.clone(),
            branches: s
                .topology
                .branches
                .iter()
                .map(|b| BranchEntry { from: b.from.clone(), to: b.to.clone(), z: ImpedanceSpec::pu(b.z) })
                .collect(),
        },
        converter_defaults: None,
        converters: s
            .converters
            .iter()
            .map(|c| {
                let p = &c.params;
                ConverterEntry {
                    bus: Some(c.bus.clone()),
                    eta: Some(p.eta),
                    alpha: Some(pu(p.alpha)),
                    phi: Some(PhiSpec::Value(Quantity::new(p.phi, Unit::Rad))),
                    p_star: Some(pu(p.p_star)),
                    q_star: Some(pu(p.q_star)),
                    v_star: Some(pu(p.v_star)),
                    omega0: Some(p.omega0),
                    i_max: Some(pu(p.i_max)),
                    kv: Some(pu(p.kv)),
                    theta_v: Some(Quantity::new(p.theta_v, Unit::Rad)),
                }
            })
            .collect(),
        random_setpoints: None,
        grid: GridSection {
            pcc: s.topology.grid_impedance.as_ref().map(|t| t.pcc.clone()),
            z: s.topology.grid_impedance.as_ref().map(|t| ImpedanceSpec::pu(t.z)),
            v_g: pu(s.v_g_nominal),
            omega_delta: s.omega_delta,
        },
        events: s
            .events
            .iter()
            .map(|e| match e.kind {
                EventKind::VoltageDip { retained, duration } => EventEntry::VoltageDip { time: e.time, retained: pu(retained), duration },
                EventKind::GridImpedanceSwitch { z } => EventEntry::GridImpedanceSwitch { time: e.time, z: ImpedanceSpec::pu(z) },
                EventKind::LimiterMode { on } => EventEntry::LimiterMode { time: e.time, on },
            })
            .collect(),
        solver: SolverSection {
            t_end: s.t_end,
            step: s.solver.step,
            record_interval: s.solver.record_interval,
            limiter: s.limiter,
        },
        initial_state: s.initial_state.clone(),
        outputs: None,
    }
}

pub fn scenario_to_json(s: &Scenario) -> String {
    serde_json::to_string_pretty(&scenario_to_file(s)).expect("scenario documents always serialize")
}

fn write_file(path: &Path, bytes: &[u8]) -> std::io::Result<()> {
    let mut f = fs::File::create(path)?;
    f.write_all(bytes)?;
    f.flush()
}

pub fn csv_header(n: usize) -> String {
    let mut cols = vec!["t".to_string()];
    for k in 1..=n {
        cols.push(format!("v_d_{k}"));
        cols.push(format!("v_q_{k}"));
    }
    for k in 1..=n {
        cols.push(format!("i_d_{k}"));
        cols.push(format!("i_q_{k}"));
    }
    cols.push("nu".into());
    cols.join(",")
}

/// Trajectory as CSV text, 15 significant digits.
pub fn trajectory_csv(traj: &Trajectory) -> String {
    let n = traj.converters();
    let mut out = csv_header(n);
    out.push('\n');
    for s in 0..traj.len() {
        let _ = write!(out, "{:.14e}", traj.times[s]);
        for z in traj.v[s].iter().chain(&traj.i[s]) {
            let _ = write!(out, ",{:.14e},{:.14e}", z.re, z.im);
        }
        let _ = writeln!(out, ",{:.14e}", traj.nu[s]);
    }
    out
}

pub fn write_trajectory_csv(traj: &Trajectory, path: impl AsRef<Path>) -> std::io::Result<()> {
    write_file(path.as_ref(), trajectory_csv(traj).as_bytes())
}

#[derive(Debug, Clone, PartialEq)]
pub struct CsvTable {
    pub header: Vec<String>,
    pub rows: Vec<Vec<f64>>,
}

pub fn parse_csv(text: &str) -> Result<CsvTable, String> {
    let mut lines = text.lines();
    let header: Vec<String> = lines.next().ok_or("empty CSV")?.split(',').map(str::to_string).collect();
    let mut rows = Vec::new();
    for (k, line) in lines.enumerate() {
        let row: Vec<f64> = line
            .split(',')
            .map(|c| c.trim().parse::<f64>().map_err(|e| format!("row {}: {e}", k + 1)))
            .collect::<Result<_, _>>()?;
        if row.len() != header.len() {
            return Err(format!("row {} has {} columns, header has {}", k + 1, row.len(), header.len()));
        }
        rows.push(row);
    }
    Ok(CsvTable { header, rows })
}

pub fn read_csv(path: impl AsRef<Path>) -> Result<CsvTable, String> {
    let text = fs::read_to_string(path.as_ref()).map_err(|e| e.to_string())?;
    parse_csv(&text)
}

pub fn render_report(report: &CertificationReport, format: ReportFormat) -> String {
    match format {
        ReportFormat::Json => {
            let mut s = serde_json::to_string_pretty(report).expect("reports always serialize");
            s.push('\n');
            s
        }
        ReportFormat::Human => human_report(report),
    }
}

fn human_report(r: &CertificationReport) -> String {
    let mut out = String::new();
    let verdict = if r.certified { "CERTIFIED" } else { "NOT CERTIFIED" };
    let _ = writeln!(out, "verdict: {verdict}");
    let delta_kind = if r.conservative { "conservative delta (equilibrium-independent)" } else { "full delta at solved equilibrium" };
    let _ = writeln!(out, "node index: {delta_kind}");
    if r.conditional_on_equilibrium {
        let _ = writeln!(out, "note: no equilibrium was solved; the guarantee assumes one exists");
    }
    match r.epsilon_net {
        Some(e) => {
            let _ = writeln!(out, "epsilon_net = {e:.6} pu");
        }
        None => {
            let _ = writeln!(out, "epsilon_net = n/a (no converters)");
        }
    }
    let _ = writeln!(out, "{:>4}  {:<12} {:>12} {:>12}  status", "k", "bus", "delta_k", "margin");
    for (k, (d, m)) in r.delta.iter().zip(&r.margins).enumerate() {
        let bus = r.converter_buses.get(k).map_or("-", String::as_str);
        let status = if *m > 0.0 { "ok" } else { "VIOLATED" };
        let _ = writeln!(out, "{:>4}  {:<12} {:>12.6} {:>12.6}  {status}", k + 1, bus, d, m);
    }
    if let Some(m) = r.min_margin() {
        let _ = writeln!(out, "min margin = {m:.6} pu");
    }
    if !r.certified {
        let _ = writeln!(out, "stability guarantee lost: at least one converter violates delta_k + epsilon_net > 0");
    }
    out
}

pub fn write_report(report: &CertificationReport, path: impl AsRef<Path>, format: ReportFormat) -> std::io::Result<()> {
    write_file(path.as_ref(), render_report(report, format).as_bytes())
}

pub fn read_report_json(path: impl AsRef<Path>) -> Result<CertificationReport, String> {
    let text = fs::read_to_string(path.as_ref()).map_err(|e| e.to_string())?;
    serde_json::from_str(&text).map_err(|e| e.to_string())
}
