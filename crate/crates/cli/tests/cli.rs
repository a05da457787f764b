use std::path::Path;
use std::process::{Command, Output};

fn threshold_gms(args: &[&str], out: &Path) -> Output {
    Command::new(env!("CARGO_BIN_EXE_threshold-gms")).args(args).arg("--out").arg(out).output().expect("binary runs")
}

fn json(path: &Path) -> serde_json::Value {
    serde_json::from_slice(&std::fs::read(path).unwrap()).unwrap()
}

#[test]
fn invalid_input_exits_2_and_writes_nothing() {
    let dir = tempfile::tempdir().unwrap();
    let cases: [&[&str]; 4] = [
        &["simulate", "--exponential", "1,2,0,1", "--horizon", "5"],
        &["simulate", "--exponential", "2,1,1,1", "--start", "6", "--horizon", "5"],
        &["ladder-mc", "--exponential", "1,2,1,1", "--reps", "0"],
        &["classify", "--grid", "alpha_star=1;gamma=2"],
    ];
    for (i, args) in cases.iter().enumerate() {
        let out = dir.path().join(format!("case{i}"));
        let o = threshold_gms(args, &out);
        assert_eq!(o.status.code(), Some(2), "{args:?}");
        assert!(!out.exists(), "{args:?} left output behind");
        assert!(String::from_utf8_lossy(&o.stderr).starts_with("error:"));
    }
}

#[test]
fn missing_params_file_is_an_error() {
    let dir = tempfile::tempdir().unwrap();
    let o = threshold_gms(&["classify", "--params", "/nonexistent/params.json"], &dir.path().join("o"));
    assert_eq!(o.status.code(), Some(2));
}

#[test]
fn classify_reports_exponential_verdicts() {
    let dir = tempfile::tempdir().unwrap();
    let out = dir.path().join("c");
    assert!(threshold_gms(&["classify", "--exponential", "1,2,1,1", "--format", "json"], &out).status.success());
    let r = json(&out.join("classification.json"));
    assert_eq!(r["recurrence"], "Transient");
    assert_eq!(r["limit_count"], "Infinite");
    assert_eq!(r["method"], "AnalyticExponent");
    assert!((r["integrals"]["e_m"].as_f64().unwrap() - 1.0).abs() < 1e-9);
}

#[test]
fn simulate_applies_initial_configuration() {
    let dir = tempfile::tempdir().unwrap();
    let init = dir.path().join("init.txt");
    std::fs::write(&init, "0.5\n1.5\n").unwrap();
    let out = dir.path().join("s");
    let o = threshold_gms(
        &["simulate", "--exponential", "2,1,1,1", "--horizon", "3", "--initial", init.to_str().unwrap()],
        &out,
    );
    assert!(o.status.success());
    let s = json(&out.join("summary.json"));
    assert_eq!(s["initial_count"], 2);
    assert_eq!(s["events"].as_u64().unwrap(), s["births"].as_u64().unwrap() + s["extinctions"].as_u64().unwrap());
    let trace = std::fs::read_to_string(out.join("trace.csv")).unwrap();
    assert_eq!(trace.lines().next().unwrap(), "time,kind,mark,count_after");
    assert_eq!(trace.lines().count() as u64, 1 + s["events"].as_u64().unwrap());
}

#[test]
fn ladder_mc_writes_samples_and_ladders() {
    let dir = tempfile::tempdir().unwrap();
    let out = dir.path().join("l");
    let o = threshold_gms(&["ladder-mc", "--exponential", "1,2,1,1", "--reps", "500", "--export", "2"], &out);
    assert!(o.status.success());
    let samples = std::fs::read_to_string(out.join("samples.csv")).unwrap();
    assert_eq!(samples.lines().count(), 501);
    assert!(out.join("ladder_0.csv").exists() && out.join("ladder_1.csv").exists());
    let s = json(&out.join("summary.json"));
    assert!(s["closed_forms"]["transient"].is_object());
}

#[test]
fn validate_subset_passes_and_reports() {
    let dir = tempfile::tempdir().unwrap();
    let out = dir.path().join("v");
    let o = threshold_gms(&["validate", "--reps", "1000", "--only", "phase_map,oracle"], &out);
    assert_eq!(o.status.code(), Some(0));
    let stdout = String::from_utf8_lossy(&o.stdout);
    assert_eq!(stdout.lines().filter(|l| l.starts_with("PASS [")).count(), 2);
    assert!(out.join("report.json").exists());
}

#[test]
fn validate_rejects_unknown_check() {
    let dir = tempfile::tempdir().unwrap();
    let o = threshold_gms(&["validate", "--only", "no_such_check"], &dir.path().join("v"));
    assert_eq!(o.status.code(), Some(2));
}
