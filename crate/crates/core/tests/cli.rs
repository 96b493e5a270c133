use std::path::Path;
use std::process::{Command, Output};

fn iessic(args: &[&str], out: &Path) -> Output {
    Command::new(env!("CARGO_BIN_EXE_iessic"))
        .args(args)
        .arg("--out")
        .arg(out)
        .output()
        .expect("binary runs")
}

fn read(dir: &Path, name: &str) -> String {
    std::fs::read_to_string(dir.join(name)).unwrap()
}

#[test]
fn single_user_has_one_scenario() {
    let dir = tempfile::tempdir().unwrap();
    let out = iessic(&["enumerate", "--users", "1"], dir.path());
    assert!(out.status.success());
    let csv = read(dir.path(), "scenarios.csv");
    let rows: Vec<&str> = csv.lines().skip(1).collect();
    assert_eq!(rows.len(), 1);
    assert!(rows[0].starts_with("1,1,1,"));
}

#[test]
fn four_users_include_the_worked_example() {
    let dir = tempfile::tempdir().unwrap();
    assert!(iessic(&["enumerate", "--users", "4", "--perfect-phy"], dir.path()).status.success());
    let csv = read(dir.path(), "scenarios.csv");
    assert_eq!(csv.lines().next().unwrap(), "label,slots_used,p_occ,rho,p_res,contribution,cumulative,latency_ms");
    assert!(csv.lines().any(|l| l.starts_with("422121,6,")));
    let last = csv.lines().last().unwrap();
    let cumulative: f64 = last.split(',').nth(6).unwrap().parse().unwrap();
    let mac: f64 = {
        let dir = tempfile::tempdir().unwrap();
        iessic(&["throughput", "--users", "4", "--perfect-phy"], dir.path());
        let t = read(dir.path(), "throughput.csv");
        t.lines().last().unwrap().split(',').nth(2).unwrap().parse().unwrap()
    };
    assert!((cumulative - mac).abs() < 1e-5);
}

#[test]
fn unknown_key_is_a_config_error() {
    let dir = tempfile::tempdir().unwrap();
    let out = iessic(&["throughput", "--set", "sigma_v3=0.1"], dir.path());
    assert_eq!(out.status.code(), Some(2));
    let err = String::from_utf8(out.stderr).unwrap();
    assert_eq!(err.trim_end().lines().count(), 1);
    assert!(err.contains("sigma_v3"));
}

#[test]
fn bad_value_names_the_key() {
    let dir = tempfile::tempdir().unwrap();
    let out = iessic(&["throughput", "--set", "eps_self=0.5", "--set", "eps_cross=0.1"], dir.path());
    assert_eq!(out.status.code(), Some(2));
    assert!(String::from_utf8(out.stderr).unwrap().contains("eps"));
}

#[test]
fn config_file_is_layered_under_flags() {
    let dir = tempfile::tempdir().unwrap();
    let cfg = dir.path().join("run.cfg");
    std::fs::write(&cfg, "# comment\nusers = 2\naddress_bits = 4\n").unwrap();
    let out = iessic(&["throughput", "--config", cfg.to_str().unwrap(), "--users", "3", "--perfect-phy"], dir.path());
    assert!(out.status.success());
    let csv = read(dir.path(), "throughput.csv");
    let rows: Vec<&str> = csv.lines().skip(1).collect();
    assert_eq!(rows.len(), 3);
    assert!(rows.iter().all(|r| r.split(',').nth(1) == Some("4")));
}

#[test]
fn default_calibration_exits_three_and_keeps_its_csv() {
    let dir = tempfile::tempdir().unwrap();
    let out = iessic(&["calibrate"], dir.path());
    assert_eq!(out.status.code(), Some(3));
    assert!(read(dir.path(), "calibration.csv").starts_with("quantity,value"));
    let ok = iessic(&["calibrate", "--set", "fit=snr-eps-cross"], dir.path());
    assert!(ok.status.success());
}

#[test]
fn single_point_sweep() {
    let dir = tempfile::tempdir().unwrap();
    let out = iessic(&["sweep", "--param", "eps_cross", "--from", "0.05", "--to", "0.05", "--steps", "1"], dir.path());
    assert!(out.status.success());
    let csv = read(dir.path(), "sweep.csv");
    assert_eq!(csv.lines().count(), 1 + 2 * 3);
    assert!(csv.lines().skip(1).all(|l| l.starts_with("eps_cross,0.05,")));
}

#[test]
fn trace_lists_every_slot() {
    let dir = tempfile::tempdir().unwrap();
    let out = iessic(&["trace", "--set", "addresses=000,001,100,101"], dir.path());
    assert!(out.status.success());
    let csv = read(dir.path(), "trace.csv");
    let label: String = csv
        .lines()
        .skip(1)
        .map(|l| l.split(',').nth(1).unwrap().split(';').filter(|t| !t.is_empty()).count().to_string())
        .collect();
    assert_eq!(label, "422121");
}

#[test]
fn repeated_runs_are_identical() {
    let (a, b) = (tempfile::tempdir().unwrap(), tempfile::tempdir().unwrap());
    let args = ["throughput", "--users", "3", "--seed", "9", "--set", "mc_trials=5000"];
    assert!(iessic(&args, a.path()).status.success());
    assert!(iessic(&args, b.path()).status.success());
    assert_eq!(read(a.path(), "throughput.csv"), read(b.path(), "throughput.csv"));
}
