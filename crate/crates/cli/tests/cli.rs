use std::path::{Path, PathBuf};
use std::process::{Command, Output};

fn bin() -> Command {
    let mut c = Command::new(env!("CARGO_BIN_EXE_phasebal"));
    c.env("PHASEBAL_WORKERS", "1");
    c
}

fn fixture(name: &str) -> PathBuf {
    Path::new(env!("CARGO_MANIFEST_DIR")).join("../core/fixtures").join(format!("{name}.json"))
}

fn run(args: &[&str]) -> Output {
    bin().args(args).output().expect("binary runs")
}

fn code(o: &Output) -> i32 {
    o.status.code().expect("exit code")
}

fn s(p: &Path) -> &str {
    p.to_str().unwrap()
}

#[test]
fn balanced_str1_run_writes_reports() {
    let dir = tempfile::tempdir().unwrap();
    let net = fixture("balanced");
    let o = run(&["run", "--network", s(&net), "--strategy", "1", "--out", s(dir.path())]);
    assert_eq!(code(&o), 0, "{}", String::from_utf8_lossy(&o.stderr));
    for f in ["report.json", "timings.json", "periods.csv", "windows.csv"] {
        assert!(dir.path().join(f).is_file(), "{f} missing");
    }
    let report: serde_json::Value =
        serde_json::from_str(&std::fs::read_to_string(dir.path().join("report.json")).unwrap()).unwrap();
    assert!(report["objective"].as_f64().unwrap().abs() < 1e-6);

    // The saved report replays through the exact power flow.
    let v = run(&["validate", "--network", s(&net), "--report", s(&dir.path().join("report.json"))]);
    assert_eq!(code(&v), 0);
    let metrics: serde_json::Value = serde_json::from_slice(&v.stdout).unwrap();
    assert!(metrics["max_voltage_violation"].as_f64().unwrap() <= 1e-9);
}

#[test]
fn svc_only_on_high_pv_is_infeasible() {
    let dir = tempfile::tempdir().unwrap();
    let o = run(&["run", "--network", s(&fixture("high-pv")), "--strategy", "2", "--out", s(dir.path())]);
    assert_eq!(code(&o), 2);
    assert!(String::from_utf8_lossy(&o.stderr).contains("infeasible"));
}

#[test]
fn input_errors_exit_with_four() {
    let dir = tempfile::tempdir().unwrap();
    let missing = dir.path().join("nope.json");
    let o = run(&["run", "--network", s(&missing), "--out", s(dir.path())]);
    assert_eq!(code(&o), 4);
    // The balanced fixture has no SVC to resize.
    let o = run(&["run", "--network", s(&fixture("balanced")), "--svc-cap", "0.2", "--out", s(dir.path())]);
    assert_eq!(code(&o), 4);
    let o = run(&["run", "--network", s(&fixture("balanced")), "--strategy", "2", "--out", s(dir.path())]);
    assert_eq!(code(&o), 4);
}

#[test]
fn identical_runs_give_identical_reports() {
    let (a, b) = (tempfile::tempdir().unwrap(), tempfile::tempdir().unwrap());
    for d in [&a, &b] {
        let o = run(&["run", "--network", s(&fixture("high-pv")), "--strategy", "4", "--out", s(d.path()), "--node-log"]);
        assert_eq!(code(&o), 0);
    }
    let read = |d: &tempfile::TempDir, f: &str| std::fs::read(d.path().join(f)).unwrap();
    assert_eq!(read(&a, "report.json"), read(&b, "report.json"));
    assert_eq!(read(&a, "periods.csv"), read(&b, "periods.csv"));
    assert!(!read(&a, "nodes_1.log").is_empty());
}

#[test]
fn svc_sweep_is_monotone_on_high_pv() {
    let dir = tempfile::tempdir().unwrap();
    let o = run(&[
        "sweep-svc",
        "--network",
        s(&fixture("high-pv")),
        "--strategy",
        "4",
        "--capacities",
        "0,0.15,0.3",
        "--out",
        s(dir.path()),
    ]);
    assert_eq!(code(&o), 0, "{}", String::from_utf8_lossy(&o.stderr));
    let mut rdr = csv::Reader::from_path(dir.path().join("sweep_svc.csv")).unwrap();
    let headers = rdr.headers().unwrap().clone();
    let col = headers.iter().position(|h| h == "objective").unwrap();
    let f: Vec<f64> = rdr.records().map(|r| r.unwrap()[col].parse().unwrap()).collect();
    assert_eq!(f.len(), 3);
    assert!(f.windows(2).all(|w| w[1] <= w[0] + 1e-6), "{f:?}");
}

#[test]
fn window_sweep_lists_partitions() {
    let dir = tempfile::tempdir().unwrap();
    let o = run(&[
        "sweep-no",
        "--network",
        s(&fixture("balanced")),
        "--strategy",
        "1",
        "--values",
        "1,2,4",
        "--out",
        s(dir.path()),
    ]);
    assert_eq!(code(&o), 0, "{}", String::from_utf8_lossy(&o.stderr));
    let text = String::from_utf8_lossy(&o.stdout);
    assert!(text.contains("N_o=2 [1-2 3-4]"), "{text}");
    assert!(dir.path().join("sweep_no.csv").is_file());
}

#[test]
fn fixtures_command_writes_every_network() {
    let dir = tempfile::tempdir().unwrap();
    let o = run(&["fixtures", "--out", s(dir.path())]);
    assert_eq!(code(&o), 0);
    for name in ["balanced", "ieee13", "ieee13-pv3", "ieee13-pv3.5", "high-pv"] {
        let written = std::fs::read_to_string(dir.path().join(format!("{name}.json"))).unwrap();
        let shipped = std::fs::read_to_string(fixture(name)).unwrap();
        assert_eq!(written, shipped, "{name}");
    }
}
