//! C interface to `dvoc-core`.
//!
//! Scenarios, reports and trajectories cross the boundary as opaque handles
//! that the caller releases with the matching `*_free` function. Every entry
//! point returns a [`DvocStatus`]; on failure a message is kept per thread and
//! can be fetched with [`dvoc_last_error_message`].
//!
//! # Safety
//!
//! Handle arguments must be null or a live pointer returned by this library.
//! Buffers must be valid for `len` elements and strings NUL-terminated.

#![allow(clippy::missing_safety_doc)]

use std::cell::RefCell;
use std::ffi::{c_char, CStr};
use std::panic::{catch_unwind, AssertUnwindSafe};
use std::ptr;

use dvoc_core::cli::certify_state;
use dvoc_core::node::{node_passivity_index, DvocParams as CoreParams};
use dvoc_core::scenario_io::{load_scenario, parse_scenario, render_report, write_trajectory_csv, ReportFormat};
use dvoc_core::simulator::{simulate_model, Model, SimulationError};
use dvoc_core::{CertificationReport, Scenario, Trajectory};

/// Result of every call. `NOT_CERTIFIED` still produces a report.
#[repr(C)]
#[derive(Debug, Clone, Copy, PartialEq, Eq)]
pub enum DvocStatus {
    Ok = 0,
    NotCertified = 1,
    InvalidInput = 2,
    Numerical = 3,
    NullPointer = 4,
}

/// Per-converter controller parameters in per-unit.
#[repr(C)]
#[derive(Debug, Clone, Copy)]
pub struct DvocParams {
    pub eta: f64,
    pub alpha: f64,
    pub phi: f64,
    pub p_star: f64,
    pub q_star: f64,
    pub v_star: f64,
    pub omega0: f64,
    pub i_max: f64,
    pub kv: f64,
    pub theta_v: f64,
}

impl From<&CoreParams> for DvocParams {
    fn from(p: &CoreParams) -> Self {
        DvocParams {
            eta: p.eta,
            alpha: p.alpha,
            phi: p.phi,
            p_star: p.p_star,
            q_star: p.q_star,
            v_star: p.v_star,
            omega0: p.omega0,
            i_max: p.i_max,
            kv: p.kv,
            theta_v: p.theta_v,
        }
    }
}

impl From<&DvocParams> for CoreParams {
    fn from(p: &DvocParams) -> Self {
        CoreParams {
            eta: p.eta,
            alpha: p.alpha,
            phi: p.phi,
            p_star: p.p_star,
            q_star: p.q_star,
            v_star: p.v_star,
            omega0: p.omega0,
            i_max: p.i_max,
            kv: p.kv,
            theta_v: p.theta_v,
        }
    }
}

pub struct DvocScenario(Scenario);
pub struct DvocReport(CertificationReport);
pub struct DvocTrajectory(Trajectory);

thread_local! {
    static LAST_ERROR: RefCell<String> = const { RefCell::new(String::new()) };
}

type Failure = (DvocStatus, String);

fn set_error(msg: String) {
    LAST_ERROR.with(|e| *e.borrow_mut() = msg);
}

fn guard(f: impl FnOnce() -> Result<DvocStatus, Failure>) -> DvocStatus {
    set_error(String::new());
    match catch_unwind(AssertUnwindSafe(f)) {
        Ok(Ok(status)) => status,
        Ok(Err((status, msg))) => {
            set_error(msg);
            status
        }
        Err(_) => {
            set_error("internal panic".into());
            DvocStatus::Numerical
        }
    }
}

fn null(what: &str) -> Failure {
    (DvocStatus::NullPointer, format!("{what} is null"))
}

unsafe fn deref<'a, T>(p: *const T, what: &str) -> Result<&'a T, Failure> {
    p.as_ref().ok_or_else(|| null(what))
}

unsafe fn out<'a, T>(p: *mut T, what: &str) -> Result<&'a mut T, Failure> {
    p.as_mut().ok_or_else(|| null(what))
}

unsafe fn c_str<'a>(p: *const c_char, what: &str) -> Result<&'a str, Failure> {
    if p.is_null() {
        return Err(null(what));
    }
    CStr::from_ptr(p).to_str().map_err(|_| (DvocStatus::InvalidInput, format!("{what} is not valid UTF-8")))
}

unsafe fn copy_into(src: &[f64], buf: *mut f64, len: usize) -> Result<DvocStatus, Failure> {
    if buf.is_null() {
        return Err(null("buffer"));
    }
    if len < src.len() {
        return Err((DvocStatus::InvalidInput, format!("buffer holds {len} values, {} needed", src.len())));
    }
    ptr::copy_nonoverlapping(src.as_ptr(), buf, src.len());
    Ok(DvocStatus::Ok)
}

fn input(e: impl std::fmt::Display) -> Failure {
    (DvocStatus::InvalidInput, e.to_string())
}

/// Copies the last error of this thread into `buf` as a NUL-terminated string,
/// truncating to `len - 1` bytes. Returns the full message length without the NUL.
#[no_mangle]
pub unsafe extern "C" fn dvoc_last_error_message(buf: *mut c_char, len: usize) -> usize {
    LAST_ERROR.with(|e| {
        let msg = e.borrow();
        if !buf.is_null() && len > 0 {
            let n = msg.len().min(len - 1);
            ptr::copy_nonoverlapping(msg.as_ptr().cast::<c_char>(), buf, n);
            *buf.add(n) = 0;
        }
        msg.len()
    })
}

/// Fills `out_params` with the library defaults.
#[no_mangle]
pub unsafe extern "C" fn dvoc_params_default(out_params: *mut DvocParams) -> DvocStatus {
    guard(|| {
        *out(out_params, "out_params")? = DvocParams::from(&CoreParams::default());
        Ok(DvocStatus::Ok)
    })
}

/// Node passivity index δ. A positive `v_s_mag` gives the equilibrium-aware
/// value; zero, negative or NaN gives the conservative bound.
#[no_mangle]
pub unsafe extern "C" fn dvoc_node_passivity_index(params: *const DvocParams, v_s_mag: f64, out_delta: *mut f64) -> DvocStatus {
    guard(|| {
        let p = CoreParams::from(deref(params, "params")?);
        let m = (v_s_mag > 0.0).then_some(v_s_mag);
        *out(out_delta, "out_delta")? = node_passivity_index(&p, m);
        Ok(DvocStatus::Ok)
    })
}

/// Loads a scenario file.
#[no_mangle]
pub unsafe extern "C" fn dvoc_scenario_load(path: *const c_char, out_scenario: *mut *mut DvocScenario) -> DvocStatus {
    guard(|| {
        let slot = out(out_scenario, "out_scenario")?;
        let s = load_scenario(c_str(path, "path")?).map_err(input)?;
        *slot = Box::into_raw(Box::new(DvocScenario(s)));
        Ok(DvocStatus::Ok)
    })
}

/// Parses a scenario from JSON text.
#[no_mangle]
pub unsafe extern "C" fn dvoc_scenario_from_json(json: *const c_char, out_scenario: *mut *mut DvocScenario) -> DvocStatus {
    guard(|| {
        let slot = out(out_scenario, "out_scenario")?;
        let s = parse_scenario(c_str(json, "json")?, &[]).map_err(input)?.scenario;
        *slot = Box::into_raw(Box::new(DvocScenario(s)));
        Ok(DvocStatus::Ok)
    })
}

#[no_mangle]
pub unsafe extern "C" fn dvoc_scenario_converter_count(scenario: *const DvocScenario, out_count: *mut usize) -> DvocStatus {
    guard(|| {
        *out(out_count, "out_count")? = deref(scenario, "scenario")?.0.converters.len();
        Ok(DvocStatus::Ok)
    })
}

/// Reads the parameters of converter `index`.
#[no_mangle]
pub unsafe extern "C" fn dvoc_scenario_get_params(scenario: *const DvocScenario, index: usize, out_params: *mut DvocParams) -> DvocStatus {
    guard(|| {
        let s = &deref(scenario, "scenario")?.0;
        let c = s.converters.get(index).ok_or_else(|| input(format!("converter index {index} out of range")))?;
        *out(out_params, "out_params")? = DvocParams::from(&c.params);
        Ok(DvocStatus::Ok)
    })
}

/// Replaces the parameters of converter `index`.
#[no_mangle]
pub unsafe extern "C" fn dvoc_scenario_set_params(scenario: *mut DvocScenario, index: usize, params: *const DvocParams) -> DvocStatus {
    guard(|| {
        let p = CoreParams::from(deref(params, "params")?);
        p.validate().map_err(input)?;
        let s = &mut out(scenario, "scenario")?.0;
        let c = s.converters.get_mut(index).ok_or_else(|| input(format!("converter index {index} out of range")))?;
        c.params = p;
        Ok(DvocStatus::Ok)
    })
}

#[no_mangle]
pub unsafe extern "C" fn dvoc_scenario_free(scenario: *mut DvocScenario) {
    if !scenario.is_null() {
        drop(Box::from_raw(scenario));
    }
}

/// Certifies the pre-event plant. Returns `OK` or `NOT_CERTIFIED`; in both
/// cases `*out_report` receives a report.
#[no_mangle]
pub unsafe extern "C" fn dvoc_certify(scenario: *const DvocScenario, conservative: bool, out_report: *mut *mut DvocReport) -> DvocStatus {
    guard(|| {
        let slot = out(out_report, "out_report")?;
        let s = &deref(scenario, "scenario")?.0;
        let net = s.network(s.initial_grid_z()).map_err(input)?;
        let r = certify_state(&net, s, s.v_g_nominal, conservative).map_err(|e| (DvocStatus::Numerical, e.to_string()))?;
        let status = if r.certified { DvocStatus::Ok } else { DvocStatus::NotCertified };
        *slot = Box::into_raw(Box::new(DvocReport(r)));
        Ok(status)
    })
}

#[no_mangle]
pub unsafe extern "C" fn dvoc_report_certified(report: *const DvocReport, out_certified: *mut bool) -> DvocStatus {
    guard(|| {
        *out(out_certified, "out_certified")? = deref(report, "report")?.0.certified;
        Ok(DvocStatus::Ok)
    })
}

/// Network passivity index ε_net. Fails with `INVALID_INPUT` for an empty plant.
#[no_mangle]
pub unsafe extern "C" fn dvoc_report_epsilon_net(report: *const DvocReport, out_epsilon: *mut f64) -> DvocStatus {
    guard(|| {
        let eps = deref(report, "report")?.0.epsilon_net.ok_or_else(|| input("plant has no converters"))?;
        *out(out_epsilon, "out_epsilon")? = eps;
        Ok(DvocStatus::Ok)
    })
}

#[no_mangle]
pub unsafe extern "C" fn dvoc_report_converter_count(report: *const DvocReport, out_count: *mut usize) -> DvocStatus {
    guard(|| {
        *out(out_count, "out_count")? = deref(report, "report")?.0.delta.len();
        Ok(DvocStatus::Ok)
    })
}

/// Copies δ_k for every converter into `buf`.
#[no_mangle]
pub unsafe extern "C" fn dvoc_report_delta(report: *const DvocReport, buf: *mut f64, len: usize) -> DvocStatus {
    guard(|| copy_into(&deref(report, "report")?.0.delta, buf, len))
}

/// Copies δ_k + ε_net for every converter into `buf`.
#[no_mangle]
pub unsafe extern "C" fn dvoc_report_margins(report: *const DvocReport, buf: *mut f64, len: usize) -> DvocStatus {
    guard(|| copy_into(&deref(report, "report")?.0.margins, buf, len))
}

/// Writes the JSON form of the report into `buf` (NUL-terminated) and its
/// length without the NUL into `*out_len`. With a null or short buffer only
/// the length is written and `INVALID_INPUT` is returned.
#[no_mangle]
pub unsafe extern "C" fn dvoc_report_to_json(report: *const DvocReport, buf: *mut c_char, len: usize, out_len: *mut usize) -> DvocStatus {
    guard(|| {
        let text = render_report(&deref(report, "report")?.0, ReportFormat::Json);
        *out(out_len, "out_len")? = text.len();
        if buf.is_null() || len <= text.len() {
            return Err(input(format!("buffer needs {} bytes", text.len() + 1)));
        }
        ptr::copy_nonoverlapping(text.as_ptr().cast::<c_char>(), buf, text.len());
        *buf.add(text.len()) = 0;
        Ok(DvocStatus::Ok)
    })
}

#[no_mangle]
pub unsafe extern "C" fn dvoc_report_free(report: *mut DvocReport) {
    if !report.is_null() {
        drop(Box::from_raw(report));
    }
}

/// Runs the scenario. On divergence `*out_trajectory` receives the part
/// computed so far and `NUMERICAL` is returned.
#[no_mangle]
pub unsafe extern "C" fn dvoc_simulate(scenario: *const DvocScenario, unrotated: bool, out_trajectory: *mut *mut DvocTrajectory) -> DvocStatus {
    guard(|| {
        let slot = out(out_trajectory, "out_trajectory")?;
        let s = &deref(scenario, "scenario")?.0;
        let model = if unrotated { Model::Unrotated } else { Model::Rotated };
        match simulate_model(s, model) {
            Ok(t) => {
                *slot = Box::into_raw(Box::new(DvocTrajectory(t)));
                Ok(DvocStatus::Ok)
            }
            Err(SimulationError::Diverged { time, partial }) => {
                *slot = Box::into_raw(Box::new(DvocTrajectory(*partial)));
                Err((DvocStatus::Numerical, format!("simulation diverged at t = {time} s")))
            }
            Err(e @ SimulationError::InvalidScenario(_)) => Err(input(e)),
            Err(e) => Err((DvocStatus::Numerical, e.to_string())),
        }
    })
}

/// Number of recorded samples.
#[no_mangle]
pub unsafe extern "C" fn dvoc_trajectory_len(trajectory: *const DvocTrajectory, out_len: *mut usize) -> DvocStatus {
    guard(|| {
        *out(out_len, "out_len")? = deref(trajectory, "trajectory")?.0.len();
        Ok(DvocStatus::Ok)
    })
}

#[no_mangle]
pub unsafe extern "C" fn dvoc_trajectory_times(trajectory: *const DvocTrajectory, buf: *mut f64, len: usize) -> DvocStatus {
    guard(|| copy_into(&deref(trajectory, "trajectory")?.0.times, buf, len))
}

/// Storage function ν at every sample.
#[no_mangle]
pub unsafe extern "C" fn dvoc_trajectory_nu(trajectory: *const DvocTrajectory, buf: *mut f64, len: usize) -> DvocStatus {
    guard(|| copy_into(&deref(trajectory, "trajectory")?.0.nu, buf, len))
}

/// Terminal voltage of converter `index` at every sample, split into real and
/// imaginary parts.
#[no_mangle]
pub unsafe extern "C" fn dvoc_trajectory_voltage(
    trajectory: *const DvocTrajectory,
    index: usize,
    re: *mut f64,
    im: *mut f64,
    len: usize,
) -> DvocStatus {
    guard(|| {
        let t = &deref(trajectory, "trajectory")?.0;
        if index >= t.converters() {
            return Err(input(format!("converter index {index} out of range")));
        }
        let (r, i): (Vec<f64>, Vec<f64>) = t.v.iter().map(|row| (row[index].re, row[index].im)).unzip();
        copy_into(&r, re, len)?;
        copy_into(&i, im, len)
    })
}

#[no_mangle]
pub unsafe extern "C" fn dvoc_trajectory_write_csv(trajectory: *const DvocTrajectory, path: *const c_char) -> DvocStatus {
    guard(|| {
        let t = &deref(trajectory, "trajectory")?.0;
        write_trajectory_csv(t, c_str(path, "path")?).map_err(input)?;
        Ok(DvocStatus::Ok)
    })
}

#[no_mangle]
pub unsafe extern "C" fn dvoc_trajectory_free(trajectory: *mut DvocTrajectory) {
    if !trajectory.is_null() {
        drop(Box::from_raw(trajectory));
    }
}
