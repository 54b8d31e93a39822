//! Bundled invariant suite run by `dvoc selftest`.

use std::f64::consts::FRAC_PI_2;

use num_complex::Complex64;
use rand::{Rng, SeedableRng};
use rand_chacha::ChaCha8Rng;

use crate::network::{Branch, Bus, BusKind, GridTie, PerUnitBase, PlantTopology, ReducedNetwork};
use crate::node::{cubic_inequality_check, dissipation_residual, node_passivity_index, steady_state_current, DvocParams};
use crate::numerics::{max_abs_diff, min_eigenvalue, solve_complex, symmetric_eigenvalues, ComplexMatrix, RealSymMatrix};
use crate::scenario_io::parse_scenario;
use crate::simulator::{monitor_segments, simulate, simulate_unrotated};

const SINGLE_DIP: &str = include_str!("../scenarios/single_converter_dip.json");

#[derive(Debug, Clone, PartialEq)]
pub struct CheckOutcome {
    pub module: &'static str,
    pub property: &'static str,
    pub passed: bool,
    pub detail: String,
}

#[derive(Debug, Clone, Copy, PartialEq)]
pub struct SelftestConfig {
    pub seed: u64,
    /// Multiplies the number of random draws per check.
    pub scale: usize,
    /// Added to every δ_k in the dissipation check.
    pub delta_offset: f64,
}

impl Default for SelftestConfig {
    fn default() -> Self {
        Self { seed: 1, scale: 1, delta_offset: 0.0 }
    }
}

fn c(re: f64, im: f64) -> Complex64 {
    Complex64::new(re, im)
}

/// Random connected plant with `n_conv` converter terminals, `n_int` interior
/// buses and inductive-resistive branches; the grid bus `g` hangs off one or
/// two plant buses.
pub fn random_topology<R: Rng>(rng: &mut R, n_conv: usize, n_int: usize) -> PlantTopology {
    let mut buses: Vec<Bus> = (0..n_conv).map(|k| Bus { id: format!("c{k}"), kind: BusKind::Converter }).collect();
    buses.extend((0..n_int).map(|k| Bus { id: format!("n{k}"), kind: BusKind::Interior }));
    let plant = buses.len();
    buses.push(Bus { id: "g".into(), kind: BusKind::Grid });
    let z = |rng: &mut R| c(rng.random_range(0.01..0.1), rng.random_range(0.05..0.5));
    let mut branches = Vec::new();
    for k in 1..plant {
        let j = rng.random_range(0..k);
        branches.push(Branch { from: buses[k].id.clone(), to: buses[j].id.clone(), z: z(rng) });
    }
    for _ in 0..rng.random_range(0..=plant.min(3)) {
        let a = rng.random_range(0..plant);
        let b = rng.random_range(0..plant);
        if a != b {
            branches.push(Branch { from: buses[a].id.clone(), to: buses[b].id.clone(), z: z(rng) });
        }
    }
    let pcc = rng.random_range(0..plant);
    if rng.random_bool(0.5) {
        let other = rng.random_range(0..plant);
        branches.push(Branch { from: buses[other].id.clone(), to: "g".into(), z: z(rng) });
    }
    let grid_impedance = Some(GridTie { pcc: buses[pcc].id.clone(), z: z(rng) });
    PlantTopology { buses, branches, grid_impedance, base: PerUnitBase::default() }
}

/// Converter currents from a direct solve of the unreduced nodal equations:
/// interior KCL gives the interior voltages, then each terminal current is a
/// sum of branch flows `(v_a - v_b)/z`.
pub fn full_network_currents(topo: &PlantTopology, v_conv: &[Complex64], v_g: f64) -> Vec<Complex64> {
    let ids: Vec<&str> = topo.buses.iter().map(|b| b.id.as_str()).collect();
    let pos = |id: &str| ids.iter().position(|b| *b == id).expect("known bus");
    let mut edges: Vec<(usize, usize, Complex64)> = topo.branches.iter().map(|b| (pos(&b.from), pos(&b.to), b.z)).collect();
    if let Some(t) = &topo.grid_impedance {
        edges.push((pos(&t.pcc), pos(topo.grid_bus_id()), t.z));
    }
    let conv: Vec<usize> = (0..ids.len()).filter(|&i| topo.buses[i].kind == BusKind::Converter).collect();
    let interior: Vec<usize> = (0..ids.len()).filter(|&i| topo.buses[i].kind == BusKind::Interior).collect();
    let mut volts = vec![c(0.0, 0.0); ids.len()];
    for (k, &i) in conv.iter().enumerate() {
        volts[i] = v_conv[k];
    }
    volts[pos(topo.grid_bus_id())] = c(v_g, 0.0);
    if !interior.is_empty() {
        let m = interior.len();
        let local = |i: usize| interior.iter().position(|&x| x == i);
        let mut a = ComplexMatrix::zeros(m, m);
        let mut rhs = ComplexMatrix::zeros(m, 1);
        for &(p, q, z) in &edges {
            let y = z.inv();
            for (u, w) in [(p, q), (q, p)] {
                if let Some(r) = local(u) {
                    a[(r, r)] += y;
                    match local(w) {
                        Some(s) => a[(r, s)] -= y,
                        None => rhs[(r, 0)] += y * volts[w],
                    }
                }
            }
        }
        let x = solve_complex(&a, &rhs).expect("interior block nonsingular");
        for (r, &i) in interior.iter().enumerate() {
            volts[i] = x[(r, 0)];
        }
    }
    conv.iter()
        .map(|&i| {
            edges
                .iter()
                .filter_map(|&(p, q, z)| {
                    if p == i {
                        Some((volts[p] - volts[q]) / z)
                    } else if q == i {
                        Some((volts[q] - volts[p]) / z)
                    } else {
                        None
                    }
                })
                .sum()
        })
        .collect()
}

/// Random controller with `φ ∈ [0, π/2]` and setpoints in `[-1, 1]`.
pub fn random_params<R: Rng>(rng: &mut R) -> DvocParams {
    DvocParams {
        eta: rng.random_range(1.0..50.0),
        alpha: rng.random_range(0.5..5.0),
        phi: rng.random_range(0.0..=FRAC_PI_2),
        p_star: rng.random_range(-1.0..1.0),
        q_star: rng.random_range(-1.0..1.0),
        v_star: rng.random_range(0.8..1.2),
        ..DvocParams::default()
    }
}

fn random_phasor<R: Rng>(rng: &mut R, lo: f64, hi: f64) -> Complex64 {
    Complex64::from_polar(rng.random_range(lo..hi), rng.random_range(-std::f64::consts::PI..std::f64::consts::PI))
}

fn outcome(module: &'static str, property: &'static str, passed: bool, detail: String) -> CheckOutcome {
    CheckOutcome { module, property, passed, detail }
}

pub fn check_eigensolver(cfg: &SelftestConfig) -> Vec<CheckOutcome> {
    let mut rng = ChaCha8Rng::seed_from_u64(cfg.seed);
    let mut worst_rayleigh = f64::INFINITY;
    let mut worst_closed = 0.0f64;
    for _ in 0..20 * cfg.scale {
        let n = rng.random_range(1..=8);
        let mut e = vec![0.0; n * n];
        for i in 0..n {
            for j in i..n {
                let v = rng.random_range(-1.0..1.0);
                e[i * n + j] = v;
                e[j * n + i] = v;
            }
        }
        let a = RealSymMatrix::new(n, e).expect("symmetric");
        let lmin = min_eigenvalue(&a).expect("nonempty");
        for _ in 0..50 {
            let r: Vec<f64> = (0..n).map(|_| rng.random_range(-1.0..1.0)).collect();
            let rr: f64 = r.iter().map(|x| x * x).sum();
            if rr > 0.0 {
                worst_rayleigh = worst_rayleigh.min(a.quadratic_form(&r) / rr - lmin);
            }
        }
        let (p, q, s) = (rng.random_range(-1.0..1.0), rng.random_range(-1.0..1.0), rng.random_range(-1.0..1.0));
        let b = RealSymMatrix::from_rows(&[vec![p, q], vec![q, s]]).expect("symmetric");
        let ev = symmetric_eigenvalues(&b).expect("2x2");
        let closed = 0.5 * (p + s) - (0.25 * (p - s) * (p - s) + q * q).sqrt();
        worst_closed = worst_closed.max((ev[0] - closed).abs());
    }
    vec![
        outcome("numerics", "rayleigh_quotient_bound", worst_rayleigh >= -1e-10, format!("min(r'Ar/r'r - lambda_min) = {worst_rayleigh:.3e}")),
        outcome("numerics", "closed_form_2x2", worst_closed < 1e-12, format!("max deviation {worst_closed:.3e}")),
    ]
}

pub fn check_kron_oracle(cfg: &SelftestConfig) -> Vec<CheckOutcome> {
    let mut rng = ChaCha8Rng::seed_from_u64(cfg.seed ^ 0x6b72);
    let mut worst = 0.0f64;
    let mut failures = 0;
    for _ in 0..20 * cfg.scale {
        let (n_conv, n_int) = (rng.random_range(1..=6), rng.random_range(0..=4));
        let topo = random_topology(&mut rng, n_conv, n_int);
        let n = topo.converter_bus_ids().len();
        let Ok(net) = ReducedNetwork::from_topology(&topo, 1.0, vec![FRAC_PI_2; n]) else {
            failures += 1;
            continue;
        };
        let v: Vec<Complex64> = (0..n).map(|_| random_phasor(&mut rng, 0.5, 1.5)).collect();
        let v_g = rng.random_range(0.2..1.2);
        let reduced = net.unrotated_current(&v, v_g).expect("dimension");
        worst = worst.max(max_abs_diff(&reduced, &full_network_currents(&topo, &v, v_g)));
    }
    vec![outcome("network", "kron_matches_full_solve", worst < 1e-9 && failures == 0, format!("max |di| = {worst:.3e}, {failures} reduction failures"))]
}

pub fn check_dissipation(cfg: &SelftestConfig) -> Vec<CheckOutcome> {
    let mut rng = ChaCha8Rng::seed_from_u64(cfg.seed ^ 0xd155);
    let mut worst = f64::INFINITY;
    for _ in 0..10 * cfg.scale {
        let p = random_params(&mut rng);
        let omega = rng.random_range(-1.0..1.0);
        let v_s = random_phasor(&mut rng, 0.5, 1.5);
        let i_s = steady_state_current(v_s, omega, &p);
        let delta = node_passivity_index(&p, Some(v_s.norm())) + cfg.delta_offset;
        for _ in 0..100 {
            let v = random_phasor(&mut rng, 0.1, 2.0);
            let i = random_phasor(&mut rng, 0.0, 3.0);
            let r = dissipation_residual(v, v_s, i, i_s, omega, &p, delta).expect("consistent equilibrium");
            worst = worst.min(r);
        }
    }
    let mut cubic_bad = 0usize;
    for _ in 0..10_000 * cfg.scale {
        let x = [rng.random_range(-3.0..3.0), rng.random_range(-3.0..3.0)];
        let y = [rng.random_range(-3.0..3.0), rng.random_range(-3.0..3.0)];
        cubic_bad += usize::from(!cubic_inequality_check(x, y));
    }
    vec![
        outcome("node", "dissipation_residual_nonnegative", worst >= -1e-9, format!("min residual {worst:.3e}")),
        outcome("node", "cubic_inequality", cubic_bad == 0, format!("{cubic_bad} violations")),
    ]
}

pub fn check_simulation(_cfg: &SelftestConfig) -> Vec<CheckOutcome> {
    let s = parse_scenario(SINGLE_DIP, &[]).expect("bundled scenario").scenario;
    let (a, b) = match (simulate(&s), simulate_unrotated(&s)) {
        (Ok(a), Ok(b)) => (a, b),
        (a, b) => {
            let msg = format!("{:?} / {:?}", a.err(), b.err());
            return vec![outcome("simulator", "rotated_unrotated_equivalence", false, msg)];
        }
    };
    let gap = a.max_voltage_discrepancy(&b);
    let verdicts = monitor_segments(&a, &s.params());
    let monotone = verdicts.iter().all(|v| !v.certified || v.non_increasing == Some(true));
    vec![
        outcome("simulator", "rotated_unrotated_equivalence", gap < 1e-6, format!("max |dv| = {gap:.3e}")),
        outcome("simulator", "lyapunov_non_increasing", monotone, format!("{} segments checked", verdicts.len())),
    ]
}

pub fn run_selftest(cfg: &SelftestConfig) -> Vec<CheckOutcome> {
    let mut out = check_eigensolver(cfg);
    out.extend(check_kron_oracle(cfg));
    out.extend(check_dissipation(cfg));
    out.extend(check_simulation(cfg));
    out
}

#[cfg(test)]
mod tests {
    use super::*;

    #[test]
    fn pristine_suite_passes() {
        for o in run_selftest(&SelftestConfig::default()) {
            assert!(o.passed, "{}/{}: {}", o.module, o.property, o.detail);
        }
    }

    #[test]
    fn perturbed_delta_breaks_dissipation() {
        let cfg = SelftestConfig { delta_offset: 10.0, ..SelftestConfig::default() };
        let d = check_dissipation(&cfg);
        assert!(!d[0].passed);
        assert!(d[1].passed);
    }

    #[test]
    fn random_topologies_validate() {
        let mut rng = ChaCha8Rng::seed_from_u64(3);
        for _ in 0..50 {
            random_topology(&mut rng, 3, 2).validate().unwrap();
        }
    }

    #[test]
    fn full_solve_single_branch() {
        let topo = PlantTopology {
            buses: vec![Bus { id: "c0".into(), kind: BusKind::Converter }, Bus { id: "g".into(), kind: BusKind::Grid }],
            branches: vec![],
            grid_impedance: Some(GridTie { pcc: "c0".into(), z: c(0.0, 0.5) }),
            base: PerUnitBase::default(),
        };
        let i = full_network_currents(&topo, &[c(1.0, 0.5)], 1.0);
        assert!((i[0] - c(1.0, 0.0)).norm() < 1e-15);
    }
}
