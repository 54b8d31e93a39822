use std::path::{Path, PathBuf};
use std::process::Command;

use dvoc_core::scenario_io::{parse_csv, read_report_json};

fn scenario(name: &str) -> PathBuf {
    PathBuf::from(env!("CARGO_MANIFEST_DIR")).join("scenarios").join(name)
}

fn dvoc(args: &[&str], cwd: &Path) -> (i32, String, String) {
    let out = Command::new(env!("CARGO_BIN_EXE_dvoc")).args(args).current_dir(cwd).output().unwrap();
    (out.status.code().unwrap_or(-1), String::from_utf8_lossy(&out.stdout).into_owned(), String::from_utf8_lossy(&out.stderr).into_owned())
}

fn s(p: &Path) -> &str {
    p.to_str().unwrap()
}

#[test]
fn certify_exit_codes() {
    let dir = tempfile::tempdir().unwrap();
    let single = scenario("single_converter.json");
    let report = dir.path().join("r.json");
    let (code, stdout, _) = dvoc(&["certify", s(&single), "--format", "json", "-o", s(&report)], dir.path());
    assert_eq!(code, 0, "{stdout}");
    let r = read_report_json(&report).unwrap();
    assert!((r.epsilon_net.unwrap() - 6.32456).abs() < 1e-5);
    assert!(r.certified);
    assert!(r.min_margin().unwrap() > 4.32456);

    let (code, _, _) = dvoc(&["certify", "--conservative", s(&single), "--format", "json", "-o", s(&report)], dir.path());
    assert_eq!(code, 0);
    let r = read_report_json(&report).unwrap();
    assert!(r.conservative);
    assert!((r.margins[0] - 4.32456).abs() < 1e-5);

    let (code, _, _) = dvoc(&["certify", "--conservative", "--set", "converters.0.p_star=20", s(&single)], dir.path());
    assert_eq!(code, 1);

    let bad = dir.path().join("bad.json");
    std::fs::write(&bad, "{ \"schema\": \"dvoc-scenario/1\", ").unwrap();
    let (code, _, stderr) = dvoc(&["certify", s(&bad)], dir.path());
    assert_eq!(code, 2);
    assert!(stderr.contains("line"), "{stderr}");
}

#[test]
fn fault_mode_checks_event_networks() {
    let dir = tempfile::tempdir().unwrap();
    let (code, stdout, _) = dvoc(&["certify", "--fault-mode", s(&scenario("wpp9_dip.json"))], dir.path());
    assert_eq!(code, 0, "{stdout}");
    assert_eq!(stdout.matches("== ").count(), 3);
}

#[test]
fn simulate_writes_csv_and_models_agree() {
    let dir = tempfile::tempdir().unwrap();
    let dip = scenario("single_converter_dip.json");
    let a = dir.path().join("a.csv");
    let b = dir.path().join("b.csv");
    let (code, stdout, _) = dvoc(&["simulate", s(&dip), "--csv", s(&a)], dir.path());
    assert_eq!(code, 0, "{stdout}");
    assert!(stdout.contains("non-increasing on every certified segment"), "{stdout}");
    let (code, _, _) = dvoc(&["simulate", "--unrotated-model", s(&dip), "--csv", s(&b)], dir.path());
    assert_eq!(code, 0);
    let ta = parse_csv(&std::fs::read_to_string(&a).unwrap()).unwrap();
    let tb = parse_csv(&std::fs::read_to_string(&b).unwrap()).unwrap();
    assert_eq!(ta.header.len(), 1 + 4 + 1);
    assert_eq!(ta.rows.len(), tb.rows.len());
    let gap = ta.rows.iter().zip(&tb.rows).flat_map(|(x, y)| (1..3).map(move |k| (x[k] - y[k]).abs())).fold(0.0, f64::max);
    assert!(gap < 1e-6);
}

#[test]
fn equilibrium_simulation_summary() {
    let dir = tempfile::tempdir().unwrap();
    let summary = dir.path().join("sum.json");
    let (code, _, _) = dvoc(&["simulate", s(&scenario("single_converter.json")), "-o", s(&summary)], dir.path());
    assert_eq!(code, 0);
    assert!(dir.path().join("trajectory.csv").exists());
    let v: serde_json::Value = serde_json::from_str(&std::fs::read_to_string(summary).unwrap()).unwrap();
    assert!(v["final_deviation"].as_f64().unwrap() < 1e-6);
    assert_eq!(v["overcurrent"].as_array().unwrap().len(), 0);
}

#[test]
fn dip_depth_sweep_recovers_everywhere() {
    let dir = tempfile::tempdir().unwrap();
    let table = dir.path().join("sweep.csv");
    let (code, stdout, _) =
        dvoc(&["sweep", s(&scenario("wpp9_dip.json")), "--axis", "dip-retained", "--values", "0.1:0.9:5", "-o", s(&table)], dir.path());
    assert_eq!(code, 0, "{stdout}");
    let text = std::fs::read_to_string(&table).unwrap();
    let rows: Vec<&str> = text.lines().skip(1).collect();
    assert_eq!(rows.len(), 5);
    assert!(rows.iter().all(|r| r.contains(",recovered,")), "{text}");
}

#[test]
fn single_point_sweep_matches_simulate() {
    let dir = tempfile::tempdir().unwrap();
    let dip = scenario("single_converter_dip.json");
    let (_, stdout, _) = dvoc(&["sweep", s(&dip), "--axis", "dip-retained", "--values", "0.3"], dir.path());
    let summary = dir.path().join("sum.json");
    dvoc(&["simulate", s(&dip), "-o", s(&summary)], dir.path());
    let v: serde_json::Value = serde_json::from_str(&std::fs::read_to_string(summary).unwrap()).unwrap();
    let row: Vec<&str> = stdout.lines().nth(1).unwrap().split(',').collect();
    let dev: f64 = row[4].parse().unwrap();
    assert_eq!(format!("{dev:.10e}"), format!("{:.10e}", v["final_deviation"].as_f64().unwrap()));
    assert_eq!(row[5], "true");
}

#[test]
fn p_scale_sweep_is_deterministic_and_monotone() {
    let dir = tempfile::tempdir().unwrap();
    let wpp = scenario("wpp9.json");
    let args = ["sweep", s(&wpp), "--axis", "p-scale", "--values", "0:4:9", "--seed", "3", "--workers", "3"];
    let (code, first, _) = dvoc(&args, dir.path());
    assert_eq!(code, 0);
    let (_, second, _) = dvoc(&args, dir.path());
    assert_eq!(first, second);
    let margins: Vec<f64> = first.lines().skip(1).map(|l| l.split(',').nth(1).unwrap().parse().unwrap()).collect();
    assert!(margins.windows(2).all(|w| w[1] < w[0]), "{first}");
}

#[test]
fn reduce_and_selftest() {
    let dir = tempfile::tempdir().unwrap();
    let (code, stdout, _) = dvoc(&["reduce", s(&scenario("single_converter.json"))], dir.path());
    assert_eq!(code, 0);
    assert!(stdout.contains("epsilon_net = gSCR = 6.324555"), "{stdout}");
    let (code, stdout, _) = dvoc(&["selftest"], dir.path());
    assert_eq!(code, 0, "{stdout}");
    assert!(!stdout.contains("FAIL"));
    let (code, _, _) = dvoc(&["certify"], dir.path());
    assert_eq!(code, 2);
}
