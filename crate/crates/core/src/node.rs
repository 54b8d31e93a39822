//! dVOC converter node: voltage dynamics, passivity index, storage function
//! and the dissipation-inequality residual.

use std::f64::consts::FRAC_PI_2;

use num_complex::Complex64;
use serde::{Deserialize, Serialize};

use crate::numerics::ComplexPhasor;

/// Hysteresis band around `i_max` for limiter engagement, in pu.
pub const LIMITER_HYSTERESIS: f64 = 1e-3;

#[derive(Debug, Clone, thiserror::Error, PartialEq)]
pub enum NodeError {
    #[error("invalid dVOC parameter: {0}")]
    InvalidParams(String),
    #[error("inconsistent equilibrium pair: steady-state residual {residual:.3e}")]
    InconsistentEquilibrium { residual: f64 },
}

/// Per-converter controller record.
#[derive(Debug, Clone, PartialEq, Serialize, Deserialize)]
pub struct DvocParams {
    /// Synchronization gain η (rad/s).
    pub eta: f64,
    /// Amplitude-regulation gain α (pu).
    pub alpha: f64,
    /// Current-feedback rotation φ in `[0, π/2]` rad.
    pub phi: f64,
    pub p_star: f64,
    pub q_star: f64,
    pub v_star: f64,
    /// Nominal frequency ω₀ (rad/s).
    pub omega0: f64,
    /// Current rating for the limiter (pu).
    pub i_max: f64,
    /// Virtual-impedance gain (pu impedance per pu overcurrent).
    pub kv: f64,
    /// Virtual-impedance angle (rad).
    pub theta_v: f64,
}

impl Default for DvocParams {
    fn default() -> Self {
        Self {
            eta: 0.04 * 100.0 * std::f64::consts::PI,
            alpha: 2.0,
            phi: FRAC_PI_2,
            p_star: 0.0,
            q_star: 0.0,
            v_star: 1.0,
            omega0: 100.0 * std::f64::consts::PI,
            i_max: 1.2,
            kv: 0.2,
            theta_v: 3f64.atan(),
        }
    }
}

impl DvocParams {
    pub fn validate(&self) -> Result<(), NodeError> {
        let bad = |m: String| Err(NodeError::InvalidParams(m));
        let finite = [self.eta, self.alpha, self.phi, self.p_star, self.q_star, self.v_star, self.i_max, self.kv, self.theta_v];
        if finite.iter().any(|v| !v.is_finite()) {
            return bad("non-finite field".into());
        }
        if self.eta <= 0.0 {
            return bad(format!("eta must be positive, got {}", self.eta));
        }
        if self.alpha <= 0.0 {
            return bad(format!("alpha must be positive, got {}", self.alpha));
        }
        if self.v_star <= 0.0 {
            return bad(format!("v_star must be positive, got {}", self.v_star));
        }
        if !(0.0..=FRAC_PI_2 + 1e-12).contains(&self.phi) {
            return bad(format!("phi must lie in [0, pi/2], got {}", self.phi));
        }
        if self.i_max <= 0.0 || self.kv < 0.0 {
            return bad("limiter needs i_max > 0 and kv >= 0".into());
        }
        Ok(())
    }

    pub fn rotation(&self) -> Complex64 {
        Complex64::from_polar(1.0, self.phi)
    }

    fn setpoint_admittance(&self) -> Complex64 {
        Complex64::new(self.p_star, -self.q_star) / (self.v_star * self.v_star)
    }
}

/// `σ* + jρ* = e^{jφ}(p* - jq*)/v*²`, returned as `(σ*, ρ*)`.
pub fn rotated_setpoint_constants(p: &DvocParams) -> (f64, f64) {
    let s = p.rotation() * p.setpoint_admittance();
    (s.re, s.im)
}

fn amplitude_factor(v: ComplexPhasor, p: &DvocParams) -> f64 {
    let vs2 = p.v_star * p.v_star;
    p.alpha * (vs2 - v.norm_sqr()) / vs2
}

/// Rotated-frame dynamics:
/// `η [ jω_Δ/η v + (σ* + jρ*) v - i_φ + α (v*² - |v|²)/v*² v ]`.
pub fn dvoc_rhs_rotated(v: ComplexPhasor, i_phi: ComplexPhasor, omega_delta: f64, p: &DvocParams) -> ComplexPhasor {
    let (sigma, rho) = rotated_setpoint_constants(p);
    let bracket = Complex64::new(0.0, omega_delta / p.eta) * v + Complex64::new(sigma, rho) * v - i_phi + amplitude_factor(v, p) * v;
    p.eta * bracket
}

/// Original-frame dynamics:
/// `jω_Δ v + η e^{jφ}((p* - jq*)/v*² v - i) + η α (v*² - |v|²)/v*² v`.
pub fn dvoc_rhs_unrotated(v: ComplexPhasor, i: ComplexPhasor, omega_delta: f64, p: &DvocParams) -> ComplexPhasor {
    Complex64::new(0.0, omega_delta) * v
        + p.eta * p.rotation() * (p.setpoint_admittance() * v - i)
        + p.eta * amplitude_factor(v, p) * v
}

/// Node passivity index δ_k. With `v_s_mag` the full index
/// `-Re{e^{jφ}(p* - jq*)/v*²} - α + α |v_s|²/(2 v*²)` is returned; without
/// it, the equilibrium-independent lower bound that drops the last
/// (nonnegative) term.
pub fn node_passivity_index(p: &DvocParams, v_s_mag: Option<f64>) -> f64 {
    let (sigma, _) = rotated_setpoint_constants(p);
    let base = -sigma - p.alpha;
    match v_s_mag {
        Some(m) => base + p.alpha * m * m / (2.0 * p.v_star * p.v_star),
        None => base,
    }
}

/// Equilibrium current `i_φs` consistent with voltage `v_s`.
pub fn steady_state_current(v_s: ComplexPhasor, omega_delta: f64, p: &DvocParams) -> ComplexPhasor {
    let (sigma, rho) = rotated_setpoint_constants(p);
    Complex64::new(0.0, omega_delta / p.eta) * v_s + Complex64::new(sigma, rho) * v_s + amplitude_factor(v_s, p) * v_s
}

/// Storage function `|v - v_s|² / (2η)`.
pub fn storage_value(v: ComplexPhasor, v_s: ComplexPhasor, eta: f64) -> f64 {
    (v - v_s).norm_sqr() / (2.0 * eta)
}

/// `Re{(v̄ - v̄_s)(i_φs - i_φ)} - dV/dt - δ |v - v_s|²`, with `dV/dt` taken
/// analytically along the rotated dynamics. Nonnegative whenever `δ` does not
/// exceed the full passivity index.
#[allow(clippy::too_many_arguments)]
pub fn dissipation_residual(
    v: ComplexPhasor,
    v_s: ComplexPhasor,
    i_phi: ComplexPhasor,
    i_phi_s: ComplexPhasor,
    omega_delta: f64,
    p: &DvocParams,
    delta_k: f64,
) -> Result<f64, NodeError> {
    let eq = steady_state_current(v_s, omega_delta, p);
    let residual = (eq - i_phi_s).norm();
    if residual > 1e-8 * (1.0 + i_phi_s.norm()) {
        return Err(NodeError::InconsistentEquilibrium { residual });
    }
    let dv = v - v_s;
    let supply = (dv.conj() * (i_phi_s - i_phi)).re;
    let v_dot = (dv.conj() * dvoc_rhs_rotated(v, i_phi, omega_delta, p)).re / p.eta;
    Ok(supply - v_dot - delta_k * dv.norm_sqr())
}

/// `(x - y)ᵀ(‖x‖² x - ‖y‖² y) ≥ ½ ‖y‖² ‖x - y‖²` for real 2-vectors.
pub fn cubic_inequality_check(x: [f64; 2], y: [f64; 2]) -> bool {
    let nx = x[0] * x[0] + x[1] * x[1];
    let ny = y[0] * y[0] + y[1] * y[1];
    let d = [x[0] - y[0], x[1] - y[1]];
    let lhs = d[0] * (nx * x[0] - ny * y[0]) + d[1] * (nx * x[1] - ny * y[1]);
    let rhs = 0.5 * ny * (d[0] * d[0] + d[1] * d[1]);
    // both sides are O(scale^4); allow rounding at that scale
    let scale = (nx.max(ny) + 1e-300).powi(2);
    lhs - rhs >= -1e-12 * scale
}

/// Threshold-proportional virtual impedance
/// `k_v (i - i_max) e^{jθ_v}` above `i_max`, zero otherwise.
pub fn virtual_impedance(i_mag: f64, p: &DvocParams) -> Complex64 {
    if i_mag <= p.i_max {
        Complex64::new(0.0, 0.0)
    } else {
        Complex64::from_polar(p.kv * (i_mag - p.i_max), p.theta_v)
    }
}

/// Limiter state with a hysteresis band around `i_max`.
#[derive(Debug, Clone, Copy, Default, PartialEq, Eq)]
pub struct LimiterLatch {
    pub engaged: bool,
}

impl LimiterLatch {
    /// Updates the latch from the unlimited current magnitude and returns the
    /// virtual impedance to insert.
    pub fn update(&mut self, i_mag: f64, p: &DvocParams) -> Complex64 {
        if self.engaged {
            if i_mag < p.i_max - LIMITER_HYSTERESIS {
                self.engaged = false;
            }
        } else if i_mag > p.i_max + LIMITER_HYSTERESIS {
            self.engaged = true;
        }
        if self.engaged {
            virtual_impedance(i_mag, p)
        } else {
            Complex64::new(0.0, 0.0)
        }
    }
}

#[cfg(test)]
mod tests {
    use super::*;
    use std::f64::consts::PI;

    fn params(phi: f64, p_star: f64, q_star: f64) -> DvocParams {
        DvocParams { phi, p_star, q_star, ..DvocParams::default() }
    }

    fn c(re: f64, im: f64) -> Complex64 {
        Complex64::new(re, im)
    }

    #[test]
    fn rotated_setpoints() {
        let (s, r) = rotated_setpoint_constants(&params(FRAC_PI_2, 1.0, 0.0));
        assert!(s.abs() < 1e-15 && (r - 1.0).abs() < 1e-15);
        assert_eq!(rotated_setpoint_constants(&params(0.7, 0.0, 0.0)), (0.0, 0.0));
        assert_eq!(rotated_setpoint_constants(&params(0.0, 0.5, -0.5)), (0.5, 0.5));
    }

    #[test]
    fn passivity_index_examples() {
        let p = params(FRAC_PI_2, 1.0, 0.0);
        assert!((node_passivity_index(&p, Some(1.0)) + 1.0).abs() < 1e-15);
        assert!((node_passivity_index(&p, None) + 2.0).abs() < 1e-15);
        assert_eq!(node_passivity_index(&params(0.3, 0.0, 0.0), Some(1.0)), -1.0);
        assert_eq!(node_passivity_index(&params(0.0, 0.5, -0.5), None), -2.5);
    }

    #[test]
    fn rhs_vanishes_at_rest() {
        let p = params(0.4, 0.0, 0.0);
        assert_eq!(dvoc_rhs_rotated(c(1.0, 0.0), c(0.0, 0.0), 0.0, &p), c(0.0, 0.0));
        let v = Complex64::from_polar(1.0, 0.8);
        assert!(dvoc_rhs_rotated(v, c(0.0, 0.0), 0.0, &p).norm() < 1e-14);
    }

    #[test]
    fn isolated_frequency_term_rotates() {
        let p = params(0.4, 0.0, 0.0);
        let w = 2.0 * PI * 0.1;
        let v = c(1.0, 0.0);
        let d = dvoc_rhs_rotated(v, c(0.0, 0.0), w, &p);
        assert!((d - c(0.0, w) * v).norm() < 1e-14);
        let d = dvoc_rhs_unrotated(v, c(0.0, 0.0), w, &p);
        assert!((d - c(0.0, w) * v).norm() < 1e-14);
    }

    #[test]
    fn equilibrium_current_yields_zero_rhs() {
        let p = params(1.2, 0.8, 0.3);
        for v in [c(1.0, 0.1), c(0.7, -0.4), c(1.3, 0.9)] {
            let i = steady_state_current(v, 0.5, &p);
            assert!(dvoc_rhs_rotated(v, i, 0.5, &p).norm() < 1e-13);
        }
    }

    #[test]
    fn steady_state_current_example() {
        let i = steady_state_current(c(1.0, 0.0), 0.0, &params(FRAC_PI_2, 1.0, 0.0));
        assert!((i - c(0.0, 1.0)).norm() < 1e-15);
        assert_eq!(steady_state_current(c(1.0, 0.0), 0.0, &params(1.0, 0.0, 0.0)), c(0.0, 0.0));
    }

    #[test]
    fn unrotated_substitution_example() {
        let p = params(0.9, 0.6, -0.2);
        let v = Complex64::from_polar(1.0, 0.3);
        let i = c(0.6, 0.2) * v;
        assert!(dvoc_rhs_unrotated(v, i, 0.0, &p).norm() < 1e-14);
    }

    #[test]
    fn rotated_and_unrotated_agree() {
        let p = params(1.1, 0.9, 0.4);
        let v = c(0.93, -0.21);
        let i = c(0.4, 0.77);
        let a = dvoc_rhs_unrotated(v, i, 0.3, &p);
        let b = dvoc_rhs_rotated(v, p.rotation() * i, 0.3, &p);
        assert!((a - b).norm() < 1e-13);
    }

    #[test]
    fn storage_examples() {
        let vs = c(0.9, 0.2);
        assert_eq!(storage_value(vs, vs, 3.0), 0.0);
        assert!((storage_value(vs + 1.0, vs, 0.5) - 1.0).abs() < 1e-15);
        let v = c(1.4, -0.3);
        assert!((storage_value(v, vs, 2.0 * 5.0) - storage_value(v, vs, 5.0) / 2.0).abs() < 1e-15);
    }

    #[test]
    fn dissipation_residual_at_equilibrium_is_zero() {
        let p = params(1.0, 0.7, 0.1);
        let vs = c(1.01, 0.2);
        let is = steady_state_current(vs, 0.0, &p);
        let d = node_passivity_index(&p, Some(vs.norm()));
        assert_eq!(dissipation_residual(vs, vs, c(0.3, 0.3), is, 0.0, &p, d).unwrap(), 0.0);
    }

    #[test]
    fn dissipation_residual_rejects_inconsistent_pair() {
        let p = params(1.0, 0.7, 0.1);
        let vs = c(1.0, 0.0);
        let err = dissipation_residual(vs, vs, c(0.0, 0.0), c(5.0, 0.0), 0.0, &p, -2.0).unwrap_err();
        assert!(matches!(err, NodeError::InconsistentEquilibrium { .. }));
    }

    #[test]
    fn cubic_inequality_examples() {
        assert!(cubic_inequality_check([0.3, -0.2], [0.3, -0.2]));
        assert!(cubic_inequality_check([2.0, 0.0], [1.0, 0.0]));
    }

    #[test]
    fn virtual_impedance_examples() {
        let p = DvocParams { i_max: 1.0, kv: 0.2, theta_v: 3f64.atan(), ..DvocParams::default() };
        assert_eq!(virtual_impedance(0.5, &p), c(0.0, 0.0));
        assert_eq!(virtual_impedance(1.0, &p), c(0.0, 0.0));
        let z = virtual_impedance(2.0, &p);
        assert!((z.norm() - 0.2).abs() < 1e-15);
        assert!((z.arg() - 3f64.atan()).abs() < 1e-15);
    }

    #[test]
    fn limiter_latch_hysteresis() {
        let p = DvocParams { i_max: 1.0, ..DvocParams::default() };
        let mut latch = LimiterLatch::default();
        assert_eq!(latch.update(1.0005, &p), c(0.0, 0.0));
        assert!(!latch.engaged);
        assert!(latch.update(1.5, &p).norm() > 0.0);
        latch.update(0.9995, &p);
        assert!(latch.engaged);
        latch.update(0.99, &p);
        assert!(!latch.engaged);
    }

    #[test]
    fn parameter_validation() {
        assert!(DvocParams::default().validate().is_ok());
        assert!(DvocParams { eta: 0.0, ..DvocParams::default() }.validate().is_err());
        assert!(DvocParams { alpha: -1.0, ..DvocParams::default() }.validate().is_err());
        assert!(DvocParams { v_star: 0.0, ..DvocParams::default() }.validate().is_err());
        assert!(DvocParams { phi: 2.0, ..DvocParams::default() }.validate().is_err());
    }
}
