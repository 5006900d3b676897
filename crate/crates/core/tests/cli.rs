use std::path::Path;
use std::process::{Command, Output};

fn run(args: &[&str]) -> Output {
    Command::new(env!("CARGO_BIN_EXE_ibdwaves")).args(args).output().expect("binary runs")
}

fn out_arg(dir: &Path) -> String {
    dir.to_str().unwrap().to_string()
}

#[test]
fn usage_errors_exit_with_two() {
    let dir = tempfile::tempdir().unwrap();
    let o = out_arg(dir.path());
    assert_eq!(run(&["speed-curve", "--sigma", "0.9:0.1:0.1", "--out", &o]).status.code(), Some(2));
    assert_eq!(run(&["profile", "--kind", "uptw", "--sigma", "0.5", "--out", &o]).status.code(), Some(2));
    assert_eq!(run(&["no-such-command"]).status.code(), Some(2));
    assert_eq!(run(&["--help"]).status.code(), Some(0));
}

#[test]
fn speed_curve_is_byte_identical_across_runs() {
    let dir = tempfile::tempdir().unwrap();
    let mut texts = Vec::new();
    for k in 0..2 {
        let o = out_arg(&dir.path().join(format!("run{k}")));
        let r = run(&["--seedless-deterministic", "speed-curve", "--sigma", "0.1,0.5,0.9", "--out", &o]);
        assert!(r.status.success(), "{}", String::from_utf8_lossy(&r.stderr));
        let csv = std::fs::read(dir.path().join(format!("run{k}/speed_curve.csv"))).unwrap();
        let manifest = std::fs::read(dir.path().join(format!("run{k}/manifest.json"))).unwrap();
        texts.push((csv, manifest));
    }
    assert_eq!(texts[0], texts[1]);
    let csv = String::from_utf8(texts[0].0.clone()).unwrap();
    assert!(csv.starts_with("sigma,v,method,delta\n"));
    assert!(!csv.contains('\r'));
    let manifest: serde_json::Value = serde_json::from_slice(&texts[0].1).unwrap();
    let files = manifest["outputs"].as_array().unwrap();
    assert!(files.iter().any(|f| f["path"] == "speed_curve.svg"));
    for f in files {
        let bytes = std::fs::read(dir.path().join("run0").join(f["path"].as_str().unwrap())).unwrap();
        assert_eq!(f["sha256"], ibdwaves::output::sha256_hex(&bytes));
    }
}

#[test]
fn config_file_is_overridden_by_flags() {
    let dir = tempfile::tempdir().unwrap();
    let cfg = dir.path().join("run.cfg");
    std::fs::write(&cfg, "# defaults\nsigma = 0.5\nbeta2 = 2\nn = 3\n").unwrap();
    let o = out_arg(&dir.path().join("pp"));
    let r = run(&["phase-portrait", "--config", cfg.to_str().unwrap(), "--sigma", "1.5", "--out", &o]);
    assert!(r.status.success(), "{}", String::from_utf8_lossy(&r.stderr));
    let manifest: serde_json::Value =
        serde_json::from_slice(&std::fs::read(dir.path().join("pp/manifest.json")).unwrap()).unwrap();
    assert_eq!(manifest["parameters"]["sigma"], 1.5);
    assert_eq!(manifest["parameters"]["beta2"], 2.0);
    assert_eq!(manifest["parameters"]["n"], 3);
}

#[test]
fn simulation_reports_threshold_and_writes_traces() {
    let dir = tempfile::tempdir().unwrap();
    let below = out_arg(&dir.path().join("below"));
    let r = run(&["simulate", "--sigma", "0.75", "--m0", "0.1", "--t-end", "4", "--out", &below]);
    assert!(r.status.success());
    assert!(String::from_utf8_lossy(&r.stdout).contains("no propagation: below threshold"));

    let lower = out_arg(&dir.path().join("lower"));
    let r = run(&["simulate", "--sigma", "4", "--m0", "0", "--t-end", "3", "--out", &lower]);
    assert!(r.status.success());
    let report: serde_json::Value =
        serde_json::from_slice(&std::fs::read(dir.path().join("lower/report.json")).unwrap()).unwrap();
    assert_eq!(report["fronts"][0]["points"], 0);
    assert!(report["fronts"][1]["fitted_speed"].as_f64().unwrap() > 5.0);
    let final_csv = std::fs::read_to_string(dir.path().join("lower/snapshots/final.csv")).unwrap();
    assert!(final_csv.lines().skip(1).all(|l| l.split(',').nth(1) == Some("0")));
    assert!(dir.path().join("lower/trace_I.csv").exists());
}
