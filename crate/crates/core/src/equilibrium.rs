//! Closed-loop equilibrium of the converter nodes coupled through the
//! reduced network.

use num_complex::Complex64;
use serde::{Deserialize, Serialize};

use crate::network::{NetworkError, ReducedNetwork};
use crate::node::{rotated_setpoint_constants, steady_state_current, DvocParams};
use crate::numerics::{flatten, newton_solve, unflatten, NewtonOptions};

/// Solutions with any `|v_s,k|` below this are rejected as non-operational.
pub const MIN_OPERATING_VOLTAGE: f64 = 0.1;
pub const EQUILIBRIUM_TOL: f64 = 1e-10;
pub const EQUILIBRIUM_MAX_ITER: usize = 100;

#[derive(Debug, Clone, PartialEq, Serialize, Deserialize)]
pub struct EquilibriumPoint {
    pub v_s: Vec<Complex64>,
    pub i_phi_s: Vec<Complex64>,
    pub residual_norm: f64,
    pub converged: bool,
    #[serde(default)]
    pub iterations: usize,
}

#[derive(Debug, Clone, thiserror::Error, PartialEq)]
pub enum EquilibriumError {
    #[error("equilibrium solve did not converge after {iterations} iterations (residual {residual_norm:.3e})")]
    NoConvergence { iterations: usize, residual_norm: f64, last: Vec<Complex64> },
    #[error("equilibrium at converter {index} has |v_s| = {magnitude:.4} pu (non-operational)")]
    NonOperational { index: usize, magnitude: f64 },
    #[error("dimension mismatch: {0}")]
    Dimension(String),
    #[error("grid voltage must be positive, got {0}")]
    GridVoltage(f64),
    #[error(transparent)]
    Network(#[from] NetworkError),
}

fn check_dims(net: &ReducedNetwork, params: &[DvocParams]) -> Result<(), EquilibriumError> {
    if params.len() != net.len() {
        return Err(EquilibriumError::Dimension(format!("{} parameter sets for {} converters", params.len(), net.len())));
    }
    Ok(())
}

/// Real-flattened residual `F(v)_k = i_φs,k(v_k) - [i_φ(v)]_k`.
fn residual(net: &ReducedNetwork, params: &[DvocParams], omega_delta: f64, v_g: f64, x: &[f64]) -> Vec<f64> {
    let v = unflatten(x);
    let i_net = net.current(&v, v_g).expect("dimensions checked");
    let f: Vec<Complex64> = v
        .iter()
        .zip(params)
        .zip(&i_net)
        .map(|((&vk, p), &ik)| steady_state_current(vk, omega_delta, p) - ik)
        .collect();
    flatten(&f)
}

/// Analytic Jacobian of [`residual`], row-major over the real flattening.
fn jacobian(net: &ReducedNetwork, rotated_y: &crate::numerics::ComplexMatrix, params: &[DvocParams], omega_delta: f64, x: &[f64]) -> Vec<f64> {
    let n = net.len();
    let m = 2 * n;
    let mut jac = vec![0.0; m * m];
    let j = Complex64::new(0.0, 1.0);
    let mut put = |row: usize, col: usize, d: Complex64| {
        jac[(2 * row) * m + col] += d.re;
        jac[(2 * row + 1) * m + col] += d.im;
    };
    for k in 0..n {
        let p = &params[k];
        let (sigma, rho) = rotated_setpoint_constants(p);
        let lin = Complex64::new(sigma, rho + omega_delta / p.eta);
        let (vx, vy) = (x[2 * k], x[2 * k + 1]);
        let v = Complex64::new(vx, vy);
        let vs2 = p.v_star * p.v_star;
        let f = p.alpha * (1.0 - v.norm_sqr() / vs2);
        let df = -p.alpha / vs2;
        put(k, 2 * k, lin + f + df * 2.0 * vx * v);
        put(k, 2 * k + 1, lin * j + f * j + df * 2.0 * vy * v);
        for l in 0..n {
            let a = rotated_y[(k, l)];
            put(k, 2 * l, -a);
            put(k, 2 * l + 1, -a * j);
        }
    }
    jac
}

/// Newton solve of the coupled steady-state relations, flat start `v_k = v*_k`
/// unless `initial_guess` is given.
pub fn solve_equilibrium(
    net: &ReducedNetwork,
    params: &[DvocParams],
    omega_delta: f64,
    v_g: f64,
    initial_guess: Option<&[Complex64]>,
) -> Result<EquilibriumPoint, EquilibriumError> {
    check_dims(net, params)?;
    if !(v_g > 0.0) {
        return Err(EquilibriumError::GridVoltage(v_g));
    }
    let n = net.len();
    if n == 0 {
        return Ok(EquilibriumPoint { v_s: vec![], i_phi_s: vec![], residual_norm: 0.0, converged: true, iterations: 0 });
    }
    let guess: Vec<Complex64> = match initial_guess {
        Some(g) if g.len() == n => g.to_vec(),
        Some(g) => return Err(EquilibriumError::Dimension(format!("initial guess has {} entries for {n} converters", g.len()))),
        None => params.iter().map(|p| Complex64::new(p.v_star, 0.0)).collect(),
    };
    let rotated_y = net.rotated_admittance();
    let sol = newton_solve(
        |x: &[f64]| residual(net, params, omega_delta, v_g, x),
        Some(|x: &[f64]| jacobian(net, &rotated_y, params, omega_delta, x)),
        &flatten(&guess),
        NewtonOptions { tol: EQUILIBRIUM_TOL, max_iter: EQUILIBRIUM_MAX_ITER },
    )
    .map_err(|e| EquilibriumError::NoConvergence { iterations: e.iterations, residual_norm: e.residual_norm, last: unflatten(&e.x) })?;

    let v_s = unflatten(&sol.x);
    if let Some((index, v)) = v_s.iter().enumerate().find(|(_, v)| v.norm() < MIN_OPERATING_VOLTAGE) {
        return Err(EquilibriumError::NonOperational { index, magnitude: v.norm() });
    }
    let i_phi_s = net.current(&v_s, v_g)?;
    Ok(EquilibriumPoint { v_s, i_phi_s, residual_norm: sol.residual_norm, converged: true, iterations: sol.iterations })
}

/// Recomputes both the node steady-state relation and the network equation
/// from raw entries and returns the largest absolute residual.
pub fn verify_equilibrium(point: &EquilibriumPoint, net: &ReducedNetwork, params: &[DvocParams], omega_delta: f64, v_g: f64) -> f64 {
    let n = net.len();
    if point.v_s.len() != n || point.i_phi_s.len() != n || params.len() != n {
        return f64::INFINITY;
    }
    let mut worst = 0.0f64;
    for k in 0..n {
        let p = &params[k];
        let v = point.v_s[k];
        // node side, written from the unrotated law: e^{jφ}[(p-jq)/v*² v] + jω/η v + α(1-|v|²/v*²) v
        let setpoint = Complex64::new(p.p_star, -p.q_star) * v / (p.v_star * p.v_star);
        let amp = p.alpha * (p.v_star * p.v_star - (v.re * v.re + v.im * v.im)) / (p.v_star * p.v_star);
        let required = Complex64::from_polar(1.0, p.phi) * setpoint + Complex64::new(-v.im, v.re) * (omega_delta / p.eta) + v * amp;
        worst = worst.max((required - point.i_phi_s[k]).norm());

        // network side, straight from the matrix entries
        let mut i = -net.y_grid[k] * v_g;
        for l in 0..n {
            i += net.y[(k, l)] * point.v_s[l];
        }
        let i_phi = i * Complex64::from_polar(1.0, net.phi[k]);
        worst = worst.max((i_phi - point.i_phi_s[k]).norm());
    }
    worst
}

/// Outcome of the multi-start uniqueness probe.
#[derive(Debug, Clone, PartialEq, Serialize, Deserialize)]
pub struct UniquenessEvidence {
    pub starts: usize,
    pub converged: usize,
    /// All converged starts landed within `1e-6` of the reference point.
    pub all_agree: bool,
    pub max_distance: f64,
}

/// Re-solves from 8 perturbed starts and compares against `reference`.
/// Evidence only; it does not prove uniqueness.
pub fn multistart_uniqueness(
    net: &ReducedNetwork,
    params: &[DvocParams],
    omega_delta: f64,
    v_g: f64,
    reference: &EquilibriumPoint,
) -> UniquenessEvidence {
    let starts = 8;
    let mut converged = 0;
    let mut max_distance = 0.0f64;
    for m in 0..starts {
        let guess: Vec<Complex64> = params
            .iter()
            .enumerate()
            .map(|(k, p)| {
                let angle = std::f64::consts::TAU * (m + k) as f64 / starts as f64;
                Complex64::new(p.v_star, 0.0) * (1.0 + Complex64::from_polar(0.3, angle))
            })
            .collect();
        if let Ok(pt) = solve_equilibrium(net, params, omega_delta, v_g, Some(&guess)) {
            converged += 1;
            let d = pt.v_s.iter().zip(&reference.v_s).map(|(a, b)| (a - b).norm()).fold(0.0, f64::max);
            max_distance = max_distance.max(d);
        }
    }
    UniquenessEvidence { starts, converged, all_agree: converged > 0 && max_distance < 1e-6, max_distance }
}

#[cfg(test)]
mod tests {
    use super::*;
    use crate::network::{Branch, Bus, BusKind, PerUnitBase, PlantTopology};
    use crate::numerics::finite_difference_jacobian;

    fn single(z: Complex64) -> PlantTopology {
        PlantTopology {
            buses: vec![Bus { id: "c1".into(), kind: BusKind::Converter }, Bus { id: "g".into(), kind: BusKind::Grid }],
            branches: vec![Branch { from: "c1".into(), to: "g".into(), z }],
            grid_impedance: None,
            base: PerUnitBase::default(),
        }
    }

    #[test]
    fn zero_power_lossless_branch_is_flat() {
        let net = ReducedNetwork::from_topology(&single(Complex64::new(0.0, 0.15)), 1.0, vec![std::f64::consts::FRAC_PI_2]).unwrap();
        let p = DvocParams::default();
        let eq = solve_equilibrium(&net, std::slice::from_ref(&p), 0.0, 1.0, None).unwrap();
        assert_eq!(eq.v_s, vec![Complex64::new(1.0, 0.0)]);
        assert!(eq.iterations <= 2);
        assert_eq!(verify_equilibrium(&eq, &net, &[p], 0.0, 1.0), 0.0);
    }

    #[test]
    fn single_converter_back_substitution() {
        let z = Complex64::new(0.05, 0.15);
        let net = ReducedNetwork::from_topology(&single(z), 1.0, vec![z.arg()]).unwrap();
        let p = DvocParams { phi: z.arg(), p_star: 1.0, ..DvocParams::default() };
        let eq = solve_equilibrium(&net, std::slice::from_ref(&p), 0.0, 1.0, None).unwrap();
        assert!(eq.residual_norm < 1e-10);
        // back substitution: rotated current through the branch equals the node's steady-state demand
        let v = eq.v_s[0];
        let i_branch = (v - 1.0) / z * Complex64::from_polar(1.0, p.phi);
        assert!((steady_state_current(v, 0.0, &p) - i_branch).norm() < 1e-10);
        assert!(verify_equilibrium(&eq, &net, &[p], 0.0, 1.0) < 1e-10);
    }

    #[test]
    fn perturbed_point_fails_verification() {
        let z = Complex64::new(0.05, 0.15);
        let net = ReducedNetwork::from_topology(&single(z), 1.0, vec![z.arg()]).unwrap();
        let p = DvocParams { phi: z.arg(), p_star: 0.8, q_star: 0.2, ..DvocParams::default() };
        let mut eq = solve_equilibrium(&net, std::slice::from_ref(&p), 0.0, 1.0, None).unwrap();
        eq.v_s[0] += 0.1;
        assert!(verify_equilibrium(&eq, &net, &[p], 0.0, 1.0) > 1e-3);
    }

    #[test]
    fn analytic_jacobian_matches_finite_differences() {
        let z = Complex64::new(0.05, 0.15);
        let net = ReducedNetwork::from_topology(&single(z), 1.0, vec![1.1]).unwrap();
        let p = vec![DvocParams { phi: 1.1, p_star: 0.7, q_star: -0.3, ..DvocParams::default() }];
        let x = [1.03, 0.21];
        let mut f = |x: &[f64]| residual(&net, &p, 0.4, 1.0, x);
        let fx = f(&x);
        let fd = finite_difference_jacobian(&mut f, &x, &fx);
        let an = jacobian(&net, &net.rotated_admittance(), &p, 0.4, &x);
        for (a, b) in an.iter().zip(&fd) {
            assert!((a - b).abs() < 1e-5, "{an:?} vs {fd:?}");
        }
    }

    #[test]
    fn empty_plant() {
        let net = ReducedNetwork {
            y: crate::numerics::ComplexMatrix::zeros(0, 0),
            y_grid: vec![],
            v_g: 1.0,
            phi: vec![],
            converter_buses: vec![],
        };
        let eq = solve_equilibrium(&net, &[], 0.0, 1.0, None).unwrap();
        assert!(eq.converged && eq.v_s.is_empty());
    }

    #[test]
    fn rejects_bad_inputs() {
        let net = ReducedNetwork::from_topology(&single(Complex64::new(0.05, 0.15)), 1.0, vec![1.0]).unwrap();
        assert!(matches!(solve_equilibrium(&net, &[], 0.0, 1.0, None), Err(EquilibriumError::Dimension(_))));
        assert!(matches!(
            solve_equilibrium(&net, &[DvocParams::default()], 0.0, 0.0, None),
            Err(EquilibriumError::GridVoltage(_))
        ));
    }

    #[test]
    fn multistart_agrees_on_certified_single_converter() {
        let z = Complex64::new(0.05, 0.15);
        let net = ReducedNetwork::from_topology(&single(z), 1.0, vec![z.arg()]).unwrap();
        let p = vec![DvocParams { phi: z.arg(), p_star: 0.5, ..DvocParams::default() }];
        let eq = solve_equilibrium(&net, &p, 0.0, 1.0, None).unwrap();
        let ev = multistart_uniqueness(&net, &p, 0.0, 1.0, &eq);
        assert_eq!(ev.starts, 8);
        assert!(ev.all_agree, "{ev:?}");
    }
}
