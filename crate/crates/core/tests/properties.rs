mod common;

use std::f64::consts::FRAC_PI_2;

use common::{dense_full_currents, lambda_min_bisect};
use dvoc_core::certifier::certify_with;
use dvoc_core::equilibrium::{multistart_uniqueness, verify_equilibrium};
use dvoc_core::network::{PlantTopology, ReducedNetwork};
use dvoc_core::node::{cubic_inequality_check, dissipation_residual, node_passivity_index, steady_state_current, DvocParams};
use dvoc_core::numerics::{integrate, max_abs_diff, min_eigenvalue, symmetric_eigenvalues, RealSymMatrix, StepControl};
use dvoc_core::scenario_io::{load_scenario, parse_scenario, scenario_to_json, Override};
use dvoc_core::selftest::random_topology;
use dvoc_core::simulator::{simulate, ConverterSpec, Event, EventKind, Scenario, SolverSettings};
use dvoc_core::{certify, solve_equilibrium};
use num_complex::Complex64;
use proptest::prelude::*;
use rand::SeedableRng;
use rand_chacha::ChaCha8Rng;

fn scenario_path(name: &str) -> String {
    format!("{}/scenarios/{name}", env!("CARGO_MANIFEST_DIR"))
}

fn sym_matrix(n: usize) -> impl Strategy<Value = RealSymMatrix> {
    prop::collection::vec(-2.0f64..2.0, n * n).prop_map(move |e| {
        let mut s = vec![0.0; n * n];
        for i in 0..n {
            for j in 0..n {
                let (a, b) = if i <= j { (i, j) } else { (j, i) };
                s[i * n + j] = e[a * n + b];
            }
        }
        RealSymMatrix::new(n, s).unwrap()
    })
}

fn det3(m: [[f64; 3]; 3]) -> f64 {
    m[0][0] * (m[1][1] * m[2][2] - m[1][2] * m[2][1]) - m[0][1] * (m[1][0] * m[2][2] - m[1][2] * m[2][0])
        + m[0][2] * (m[1][0] * m[2][1] - m[1][1] * m[2][0])
}

fn rows(a: &RealSymMatrix) -> Vec<Vec<f64>> {
    (0..a.dim()).map(|i| (0..a.dim()).map(|j| a.get(i, j)).collect()).collect()
}

fn plant(seed: u64, n_conv: usize, n_int: usize) -> PlantTopology {
    random_topology(&mut ChaCha8Rng::seed_from_u64(seed), n_conv, n_int)
}

fn params_strategy() -> impl Strategy<Value = DvocParams> {
    (1.0f64..50.0, 0.5f64..5.0, 0.0f64..=FRAC_PI_2, -1.0f64..1.0, -1.0f64..1.0, 0.8f64..1.2).prop_map(|(eta, alpha, phi, p, q, v)| DvocParams {
        eta,
        alpha,
        phi,
        p_star: p,
        q_star: q,
        v_star: v,
        ..DvocParams::default()
    })
}

fn phasor(lo: f64, hi: f64) -> impl Strategy<Value = Complex64> {
    (lo..hi, -std::f64::consts::PI..std::f64::consts::PI).prop_map(|(r, a)| Complex64::from_polar(r, a))
}

proptest! {
    #![proptest_config(ProptestConfig::with_cases(64))]

    #[test]
    fn min_eigenvalue_bounds_rayleigh_quotients(a in (1usize..=6).prop_flat_map(sym_matrix), r in prop::collection::vec(-1.0f64..1.0, 6)) {
        let n = a.dim();
        let lmin = min_eigenvalue(&a).unwrap();
        let v = &r[..n];
        let rr: f64 = v.iter().map(|x| x * x).sum();
        prop_assume!(rr > 1e-12);
        prop_assert!(a.quadratic_form(v) / rr >= lmin - 1e-12);
        prop_assert!((lmin - lambda_min_bisect(&rows(&a))).abs() < 1e-10);
    }

    #[test]
    fn eigenvalues_are_roots_of_characteristic_polynomial(a in sym_matrix(2), b in sym_matrix(3)) {
        let ev = symmetric_eigenvalues(&a).unwrap();
        let (p, q, s) = (a.get(0, 0), a.get(0, 1), a.get(1, 1));
        for l in &ev {
            prop_assert!(((p - l) * (s - l) - q * q).abs() < 1e-10);
        }
        prop_assert!((ev.iter().sum::<f64>() - (p + s)).abs() < 1e-12);
        let ev3 = symmetric_eigenvalues(&b).unwrap();
        prop_assert!(ev3.windows(2).all(|w| w[0] <= w[1]));
        for l in &ev3 {
            let mut m = [[0.0; 3]; 3];
            for i in 0..3 {
                for j in 0..3 {
                    m[i][j] = b.get(i, j) - if i == j { *l } else { 0.0 };
                }
            }
            prop_assert!(det3(m).abs() < 1e-9);
        }
        let trace: f64 = (0..3).map(|i| b.get(i, i)).sum();
        prop_assert!((ev3.iter().sum::<f64>() - trace).abs() < 1e-11);
    }

    #[test]
    fn kron_reduction_matches_full_solve(seed in any::<u64>(), n_conv in 1usize..=6, n_int in 0usize..=4,
                                         v in prop::collection::vec(phasor(0.3, 1.6), 6), v_g in 0.1f64..1.2) {
        let topo = plant(seed, n_conv, n_int);
        let net = ReducedNetwork::from_topology(&topo, 1.0, vec![FRAC_PI_2; n_conv]).unwrap();
        let i = net.unrotated_current(&v[..n_conv], v_g).unwrap();
        prop_assert!(max_abs_diff(&i, &dense_full_currents(&topo, &v[..n_conv], v_g)) < 1e-9);
    }

    #[test]
    fn rotated_network_is_positive_definite(seed in any::<u64>(), n_conv in 1usize..=6, n_int in 0usize..=4, phi in 0.0f64..=FRAC_PI_2) {
        let topo = plant(seed, n_conv, n_int);
        let net = ReducedNetwork::from_topology(&topo, 1.0, vec![phi; n_conv]).unwrap();
        let eps = net.passivity_index().unwrap();
        prop_assert!(eps > 0.0);
        let order: Vec<usize> = (0..n_conv).rev().collect();
        let eps_perm = net.permuted(&order).passivity_index().unwrap();
        prop_assert!((eps - eps_perm).abs() < 1e-10 * (1.0 + eps));
    }

    #[test]
    fn dissipation_inequality_holds(p in params_strategy(), v_s in phasor(0.5, 1.5), v in phasor(0.1, 2.0), i in phasor(0.0, 3.0), omega in -2.0f64..2.0) {
        let i_s = steady_state_current(v_s, omega, &p);
        let full = node_passivity_index(&p, Some(v_s.norm()));
        let cons = node_passivity_index(&p, None);
        let r_full = dissipation_residual(v, v_s, i, i_s, omega, &p, full).unwrap();
        let r_cons = dissipation_residual(v, v_s, i, i_s, omega, &p, cons).unwrap();
        prop_assert!(r_full >= -1e-9);
        prop_assert!(r_cons >= r_full - 1e-12);
    }

    #[test]
    fn passivity_index_monotonicity(p in params_strategy(), dp in 0.01f64..1.0, m in 0.2f64..1.5, dm in 0.01f64..0.5) {
        prop_assume!(p.phi < FRAC_PI_2 - 1e-3);
        let more = DvocParams { p_star: p.p_star + dp, ..p.clone() };
        prop_assert!(node_passivity_index(&more, None) < node_passivity_index(&p, None));
        prop_assert!(node_passivity_index(&p, Some(m + dm)) > node_passivity_index(&p, Some(m)));
    }

    #[test]
    fn cubic_inequality(x in prop::array::uniform2(-10.0f64..10.0), y in prop::array::uniform2(-10.0f64..10.0)) {
        prop_assert!(cubic_inequality_check(x, y));
    }

    #[test]
    fn margins_compose_and_conservative_implies_full(seed in any::<u64>(), n_conv in 1usize..=4, n_int in 0usize..=3,
                                                     setpoints in prop::collection::vec((0.0f64..1.0, -0.5f64..0.5), 4)) {
        let topo = plant(seed, n_conv, n_int);
        let params: Vec<DvocParams> = setpoints[..n_conv].iter().map(|&(p, q)| DvocParams { p_star: p, q_star: q, ..DvocParams::default() }).collect();
        let net = ReducedNetwork::from_topology(&topo, 1.0, vec![FRAC_PI_2; n_conv]).unwrap();
        let cons = certify(&net, &params, None).unwrap();
        for (k, m) in cons.margins.iter().enumerate() {
            prop_assert_eq!(*m, cons.delta[k] + cons.epsilon_net.unwrap());
        }
        prop_assert_eq!(cons.certified, cons.min_margin().unwrap() > 0.0);
        if let Ok(eq) = solve_equilibrium(&net, &params, 0.0, 1.0, None) {
            let full = certify_with(&net, &params, Some(&eq), false).unwrap();
            prop_assert!(!cons.certified || full.certified);
            prop_assert!(full.delta.iter().zip(&cons.delta).all(|(f, c)| f >= c));
        }
    }

    #[test]
    fn equilibrium_residual_and_uniqueness(seed in any::<u64>(), n_conv in 1usize..=4, n_int in 0usize..=3,
                                           setpoints in prop::collection::vec((0.0f64..0.6, -0.3f64..0.3), 4)) {
        let topo = plant(seed, n_conv, n_int);
        let params: Vec<DvocParams> = setpoints[..n_conv].iter().map(|&(p, q)| DvocParams { p_star: p, q_star: q, ..DvocParams::default() }).collect();
        let net = ReducedNetwork::from_topology(&topo, 1.0, vec![FRAC_PI_2; n_conv]).unwrap();
        let cons = certify(&net, &params, None).unwrap();
        prop_assume!(cons.certified);
        let eq = solve_equilibrium(&net, &params, 0.0, 1.0, None).unwrap();
        prop_assert!(verify_equilibrium(&eq, &net, &params, 0.0, 1.0) < 1e-8);
        let evidence = multistart_uniqueness(&net, &params, 0.0, 1.0, &eq);
        prop_assert!(evidence.converged == 0 || evidence.all_agree, "{:?}", evidence);
    }

    #[test]
    fn scenario_round_trip_is_identity(p in 0.0f64..1.0, q in -1.0f64..1.0, eta in 1.0f64..40.0, phi_deg in 0.0f64..90.0) {
        let text = std::fs::read_to_string(scenario_path("single_converter_dip.json")).unwrap();
        let o: Vec<Override> = [
            format!("converters.0.p_star={p}"),
            format!("converters.0.q_star={q}"),
            format!("converters.0.eta={eta}"),
            format!("converters.0.phi={{\"value\": {phi_deg}, \"unit\": \"deg\"}}"),
        ].iter().map(|s| s.parse().unwrap()).collect();
        let a = parse_scenario(&text, &o).unwrap().scenario;
        let b = parse_scenario(&scenario_to_json(&a), &[]).unwrap().scenario;
        prop_assert_eq!(a, b);
    }
}

proptest! {
    #![proptest_config(ProptestConfig::with_cases(8))]

    #[test]
    fn converter_permutation_permutes_trajectories(seed in any::<u64>(), setpoints in prop::collection::vec((0.0f64..0.6, -0.3f64..0.3), 3)) {
        let topo = plant(seed, 3, 1);
        let converters: Vec<ConverterSpec> = ["c0", "c1", "c2"]
            .iter()
            .zip(&setpoints)
            .map(|(b, &(p, q))| ConverterSpec { bus: b.to_string(), params: DvocParams { p_star: p, q_star: q, ..DvocParams::default() } })
            .collect();
        let s = Scenario {
            name: "perm".into(),
            topology: topo,
            converters,
            v_g_nominal: 1.0,
            omega_delta: 0.0,
            events: vec![Event { time: 0.02, kind: EventKind::VoltageDip { retained: 0.5, duration: 0.03 } }],
            t_end: 0.1,
            solver: SolverSettings::default(),
            limiter: false,
            initial_state: None,
        };
        let a = simulate(&s).unwrap();
        let mut t = s.clone();
        t.converters = vec![s.converters[2].clone(), s.converters[0].clone(), s.converters[1].clone()];
        let b = simulate(&t).unwrap();
        prop_assert_eq!(a.len(), b.len());
        for (va, vb) in a.v.iter().zip(&b.v) {
            let d = [(va[2] - vb[0]).norm(), (va[0] - vb[1]).norm(), (va[1] - vb[2]).norm()];
            prop_assert!(d.iter().all(|&x| x < 1e-9), "{:?}", d);
        }
    }
}

#[test]
fn rk4_error_shrinks_at_fourth_order() {
    let rhs = |_t: f64, x: &[f64], dx: &mut [f64]| {
        dx[0] = x[1];
        dx[1] = -4.0 * x[0] - 0.3 * x[1];
    };
    let exact = {
        let fine = integrate(rhs, &[1.0, 0.0], (0.0, 2.0), StepControl::Fixed { h: 1e-5 }).unwrap();
        fine.states.last().unwrap().clone()
    };
    let err = |h: f64| {
        let sol = integrate(rhs, &[1.0, 0.0], (0.0, 2.0), StepControl::Fixed { h }).unwrap();
        let x = sol.states.last().unwrap();
        ((x[0] - exact[0]).powi(2) + (x[1] - exact[1]).powi(2)).sqrt()
    };
    for h in [0.04, 0.02, 0.01] {
        let ratio = err(h) / err(h / 2.0);
        assert!(ratio >= 14.0, "h = {h}: ratio {ratio}");
    }
}

#[test]
fn halving_the_step_changes_certified_trajectories_little() {
    let mut s = load_scenario(scenario_path("single_converter_dip.json")).unwrap();
    let coarse = simulate(&s).unwrap();
    s.solver.step = StepControl::Fixed { h: 5e-5 };
    let fine = simulate(&s).unwrap();
    assert!(coarse.max_voltage_discrepancy(&fine) < 1e-6);
}

#[test]
fn single_converter_reduces_to_series_impedance_condition() {
    let s = load_scenario(scenario_path("single_converter.json")).unwrap();
    let net = s.network(s.initial_grid_z()).unwrap();
    let p = &s.converters[0].params;
    let z = s.topology.grid_impedance.as_ref().unwrap().z;
    let expected = node_passivity_index(p, None) + (p.rotation() / z).re;
    let r = certify(&net, &s.params(), None).unwrap();
    assert!((r.margins[0] - expected).abs() < 1e-12);
    assert!((r.margins[0] - 4.32456).abs() < 1e-5);
}
