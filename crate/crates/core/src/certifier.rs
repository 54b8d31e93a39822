//! Decentralized stability certificate: every converter must satisfy
//! `δ_k + ε_net > 0`.

use std::sync::atomic::{AtomicUsize, Ordering};

use serde::{Deserialize, Serialize};

use crate::equilibrium::EquilibriumPoint;
use crate::network::{NetworkError, ReducedNetwork};
use crate::node::{node_passivity_index, DvocParams};

#[derive(Debug, Clone, thiserror::Error, PartialEq)]
pub enum CertifyError {
    #[error("network is not passive (lambda_min = {lambda_min:.6e}); the certificate does not apply")]
    NetworkNotPassive { lambda_min: f64 },
    #[error("dimension mismatch: {0}")]
    Dimension(String),
    #[error(transparent)]
    Network(NetworkError),
}

impl From<NetworkError> for CertifyError {
    fn from(e: NetworkError) -> Self {
        match e {
            NetworkError::NotPassive { lambda_min } => CertifyError::NetworkNotPassive { lambda_min },
            other => CertifyError::Network(other),
        }
    }
}

#[derive(Debug, Clone, PartialEq, Serialize, Deserialize)]
pub struct CertificationReport {
    /// `None` only for an empty plant.
    pub epsilon_net: Option<f64>,
    pub delta: Vec<f64>,
    /// `δ_k + ε_net`.
    pub margins: Vec<f64>,
    pub certified: bool,
    /// δ used the equilibrium-independent bound.
    pub conservative: bool,
    /// No equilibrium was available; stability additionally hinges on one existing.
    pub conditional_on_equilibrium: bool,
    #[serde(default, skip_serializing_if = "Option::is_none")]
    pub equilibrium: Option<EquilibriumPoint>,
    #[serde(default, skip_serializing_if = "Vec::is_empty")]
    pub converter_buses: Vec<String>,
}

impl CertificationReport {
    pub fn min_margin(&self) -> Option<f64> {
        self.margins.iter().copied().reduce(f64::min)
    }

    /// `ε_net - |δ_k|`, defined only where `δ_k < 0`.
    pub fn shortage_margins(&self) -> Vec<Option<f64>> {
        let eps = self.epsilon_net.unwrap_or(0.0);
        self.delta.iter().map(|&d| (d < 0.0).then(|| eps - d.abs())).collect()
    }
}

/// Evaluates the certificate. δ_k uses the full passivity index when an
/// equilibrium is supplied, otherwise the conservative bound.
pub fn certify(net: &ReducedNetwork, params: &[DvocParams], equilibrium: Option<&EquilibriumPoint>) -> Result<CertificationReport, CertifyError> {
    certify_with(net, params, equilibrium, false)
}

/// As [`certify`]; `force_conservative` ignores the equilibrium magnitudes.
pub fn certify_with(
    net: &ReducedNetwork,
    params: &[DvocParams],
    equilibrium: Option<&EquilibriumPoint>,
    force_conservative: bool,
) -> Result<CertificationReport, CertifyError> {
    if params.len() != net.len() {
        return Err(CertifyError::Dimension(format!("{} parameter sets for {} converters", params.len(), net.len())));
    }
    if let Some(eq) = equilibrium {
        if eq.v_s.len() != net.len() {
            return Err(CertifyError::Dimension("equilibrium size differs from network".into()));
        }
    }
    if net.is_empty() {
        return Ok(CertificationReport {
            epsilon_net: None,
            delta: vec![],
            margins: vec![],
            certified: true,
            conservative: equilibrium.is_none() || force_conservative,
            conditional_on_equilibrium: false,
            equilibrium: equilibrium.cloned(),
            converter_buses: vec![],
        });
    }
    let eps = net.passivity_index()?;
    let use_full = equilibrium.filter(|e| e.converged && !force_conservative);
    let delta: Vec<f64> = params
        .iter()
        .enumerate()
        .map(|(k, p)| node_passivity_index(p, use_full.map(|e| e.v_s[k].norm())))
        .collect();
    let margins: Vec<f64> = delta.iter().map(|d| d + eps).collect();
    Ok(CertificationReport {
        epsilon_net: Some(eps),
        certified: margins.iter().all(|&m| m > 0.0),
        delta,
        margins,
        conservative: use_full.is_none(),
        conditional_on_equilibrium: equilibrium.is_none_or(|e| !e.converged),
        equilibrium: equilibrium.cloned(),
        converter_buses: net.converter_buses.clone(),
    })
}

#[derive(Debug, Clone, PartialEq, Serialize, Deserialize)]
pub struct SweepRow {
    pub value: f64,
    pub min_margin: Option<f64>,
    pub certified: bool,
    pub error: Option<String>,
}

#[derive(Debug, Clone, PartialEq, Serialize, Deserialize)]
pub struct SweepTable {
    pub rows: Vec<SweepRow>,
    /// Consecutive axis values bracketing the first loss of certification.
    pub crossing: Option<(f64, f64)>,
}

/// Worker count from `DVOC_WORKERS`, else available parallelism.
pub fn default_workers() -> usize {
    std::env::var("DVOC_WORKERS")
        .ok()
        .and_then(|s| s.parse().ok())
        .filter(|&n: &usize| n > 0)
        .unwrap_or_else(|| std::thread::available_parallelism().map_or(1, |n| n.get()))
}

/// Runs `f` over `items` in a scoped worker pool, preserving order.
pub fn parallel_map<T, R, F>(items: &[T], workers: usize, f: F) -> Vec<R>
where
    T: Sync,
    R: Send,
    F: Fn(&T) -> R + Sync,
{
    let next = AtomicUsize::new(0);
    let mut slots: Vec<Option<R>> = (0..items.len()).map(|_| None).collect();
    let results = std::sync::Mutex::new(&mut slots);
    std::thread::scope(|s| {
        for _ in 0..workers.clamp(1, items.len().max(1)) {
            s.spawn(|| loop {
                let i = next.fetch_add(1, Ordering::Relaxed);
                if i >= items.len() {
                    break;
                }
                let r = f(&items[i]);
                results.lock().expect("worker panicked")[i] = Some(r);
            });
        }
    });
    slots.into_iter().map(|r| r.expect("every slot filled")).collect()
}

/// One certification per axis value; per-point failures are recorded and the
/// sweep continues.
pub fn margin_sweep<F>(values: &[f64], workers: usize, eval: F) -> SweepTable
where
    F: Fn(f64) -> Result<CertificationReport, String> + Sync,
{
    let rows = parallel_map(values, workers, |&value| match eval(value) {
        Ok(r) => SweepRow { value, min_margin: r.min_margin(), certified: r.certified, error: None },
        Err(e) => SweepRow { value, min_margin: None, certified: false, error: Some(e) },
    });
    let crossing = rows.windows(2).find(|w| w[0].certified && !w[1].certified).map(|w| (w[0].value, w[1].value));
    SweepTable { rows, crossing }
}

#[cfg(test)]
mod tests {
    use super::*;
    use crate::network::{Branch, Bus, BusKind, PerUnitBase, PlantTopology};
    use num_complex::Complex64;

    fn single_net(z: Complex64, phi: f64) -> ReducedNetwork {
        let t = PlantTopology {
            buses: vec![Bus { id: "c1".into(), kind: BusKind::Converter }, Bus { id: "g".into(), kind: BusKind::Grid }],
            branches: vec![Branch { from: "c1".into(), to: "g".into(), z }],
            grid_impedance: None,
            base: PerUnitBase::default(),
        };
        ReducedNetwork::from_topology(&t, 1.0, vec![phi]).unwrap()
    }

    #[test]
    fn single_converter_margin() {
        let z = Complex64::new(0.05, 0.15);
        let net = single_net(z, z.arg());
        let p = DvocParams { phi: std::f64::consts::FRAC_PI_2, p_star: 1.0, ..DvocParams::default() };
        let r = certify(&net, &[p], None).unwrap();
        assert_eq!(r.delta, vec![-2.0]);
        assert!((r.margins[0] - 4.32456).abs() < 1e-5);
        assert!(r.certified && r.conservative && r.conditional_on_equilibrium);
        assert_eq!(r.margins[0], r.delta[0] + r.epsilon_net.unwrap());
    }

    #[test]
    fn zero_setpoints_need_eps_above_alpha() {
        // conservative δ = -α = -2
        let p = DvocParams { p_star: 0.0, q_star: 0.0, ..DvocParams::default() };
        let strong = single_net(Complex64::new(0.0, 0.3), std::f64::consts::FRAC_PI_2); // ε = 3.33
        let weak = single_net(Complex64::new(0.0, 0.6), std::f64::consts::FRAC_PI_2); // ε = 1.67
        assert!(certify(&strong, std::slice::from_ref(&p), None).unwrap().certified);
        assert!(!certify(&weak, &[p], None).unwrap().certified);
    }

    #[test]
    fn empty_plant_is_vacuously_certified() {
        let net = ReducedNetwork {
            y: crate::numerics::ComplexMatrix::zeros(0, 0),
            y_grid: vec![],
            v_g: 1.0,
            phi: vec![],
            converter_buses: vec![],
        };
        let r = certify(&net, &[], None).unwrap();
        assert!(r.certified && r.margins.is_empty());
    }

    #[test]
    fn non_passive_network_is_an_error() {
        let net = single_net(Complex64::new(0.0, 0.15), 0.0);
        assert!(matches!(certify(&net, &[DvocParams::default()], None), Err(CertifyError::NetworkNotPassive { .. })));
    }

    #[test]
    fn shortage_margins_only_for_negative_delta() {
        let r = CertificationReport {
            epsilon_net: Some(3.0),
            delta: vec![-1.0, 0.5],
            margins: vec![2.0, 3.5],
            certified: true,
            conservative: true,
            conditional_on_equilibrium: true,
            equilibrium: None,
            converter_buses: vec![],
        };
        assert_eq!(r.shortage_margins(), vec![Some(2.0), None]);
    }

    #[test]
    fn sweep_brackets_crossing_and_keeps_errors() {
        let z = Complex64::new(0.05, 0.15);
        let net = single_net(z, z.arg());
        let values: Vec<f64> = (0..=10).map(|i| i as f64).collect();
        let table = margin_sweep(&values, 3, |s| {
            if s == 7.0 {
                return Err("boom".into());
            }
            let p = DvocParams { phi: z.arg(), p_star: s, ..DvocParams::default() };
            certify(&net, &[p], None).map_err(|e| e.to_string())
        });
        assert_eq!(table.rows.len(), 11);
        assert_eq!(table.rows[7].error.as_deref(), Some("boom"));
        let (lo, hi) = table.crossing.unwrap();
        assert!(hi == lo + 1.0);
        let margins: Vec<f64> = table.rows.iter().filter_map(|r| r.min_margin).collect();
        assert!(margins.windows(2).all(|w| w[1] < w[0]));
    }

    #[test]
    fn parallel_map_preserves_order() {
        let items: Vec<usize> = (0..50).collect();
        assert_eq!(parallel_map(&items, 4, |x| x * 2), items.iter().map(|x| x * 2).collect::<Vec<_>>());
    }
}
