use std::fs;
use std::path::Path;
use std::process::{Command, Output};

use serde_json::Value;

fn onsager(args: &[&str], out: &Path) -> Output {
    Command::new(env!("CARGO_BIN_EXE_onsager"))
        .args(args)
        .arg("--out")
        .arg(out)
        .env("ONSAGER_THREADS", "1")
        .output()
        .expect("binary runs")
}

fn json(path: &Path) -> Value {
    serde_json::from_str(&fs::read_to_string(path).unwrap()).unwrap()
}

fn stderr(o: &Output) -> String {
    String::from_utf8_lossy(&o.stderr).into_owned()
}

#[test]
fn schedule_default_is_admissible() {
    let dir = tempfile::tempdir().unwrap();
    let o = onsager(&["schedule"], dir.path());
    assert_eq!(o.status.code(), Some(0), "{}", stderr(&o));
    let s = json(&dir.path().join("schedule.json"));
    assert!((s["max_alpha"].as_f64().unwrap() - 0.27859).abs() < 1e-4);
    assert_eq!(s["psi_plus"][0].as_f64().unwrap(), -1.05);
    assert!(s["log_support_series_total"].as_f64().unwrap().is_finite());
    let csv = fs::read_to_string(dir.path().join("schedule.csv")).unwrap();
    assert_eq!(csv.lines().count(), 52);
    let m = json(&dir.path().join("manifest.json"));
    assert_eq!(m["command"], "schedule");
    assert_eq!(m["config"]["delta"].as_f64(), Some(0.1));
    assert_eq!(m["config"]["steps"].as_u64(), Some(50));
}

#[test]
fn schedule_delta_zero_threshold() {
    let dir = tempfile::tempdir().unwrap();
    let _ = onsager(&["schedule", "--delta", "0"], dir.path());
    let s = json(&dir.path().join("schedule.json"));
    assert!((s["max_alpha"].as_f64().unwrap() - 1.0 / 3.0).abs() < 1e-9);
}

#[test]
fn inadmissible_start_names_inequality() {
    let dir = tempfile::tempdir().unwrap();
    let cfg = dir.path().join("cfg.json");
    fs::write(&cfg, r#"{"start": [3.0, 0.0, -1.0], "Z": 1.0}"#).unwrap();
    let o = onsager(&["schedule", "--config", cfg.to_str().unwrap(), "--delta", "0.24"], dir.path());
    assert_eq!(o.status.code(), Some(2));
    let err = stderr(&o);
    assert!(err.contains("inadmissible stage 0"), "{err}");
    assert!(["logReq", "secondReq", "thirdReq", "etaReq", "ratioGrowth", "Nkbound"].iter().any(|n| err.contains(n)));
    let s = json(&dir.path().join("schedule.json"));
    assert_eq!(s["admissible"], false);
}

#[test]
fn flags_override_config() {
    let dir = tempfile::tempdir().unwrap();
    let cfg = dir.path().join("cfg.json");
    fs::write(&cfg, r#"{"delta": 0.2, "steps": 10}"#).unwrap();
    let o = onsager(&["schedule", "--config", cfg.to_str().unwrap(), "--delta", "0.15"], dir.path());
    assert_eq!(o.status.code(), Some(0), "{}", stderr(&o));
    let m = json(&dir.path().join("manifest.json"));
    assert_eq!(m["config"]["delta"].as_f64(), Some(0.15));
    assert_eq!(m["config"]["steps"].as_u64(), Some(10));

    fs::write(&cfg, r#"{"delta": 0.2, "bogus": 1}"#).unwrap();
    let o = onsager(&["schedule", "--config", cfg.to_str().unwrap()], dir.path());
    assert_eq!(o.status.code(), Some(2));
}

#[test]
fn outputs_are_deterministic() {
    let dir = tempfile::tempdir().unwrap();
    let files = ["schedule.csv", "schedule.json", "manifest.json"];
    assert!(onsager(&["schedule"], dir.path()).status.success());
    let first: Vec<Vec<u8>> = files.iter().map(|f| fs::read(dir.path().join(f)).unwrap()).collect();
    assert!(onsager(&["schedule"], dir.path()).status.success());
    for (f, a) in files.iter().zip(&first) {
        assert_eq!(&fs::read(dir.path().join(f)).unwrap(), a, "{f} differs");
    }
}

#[test]
fn validation_errors_exit_two() {
    let dir = tempfile::tempdir().unwrap();
    for args in [
        vec!["schedule", "--delta", "0.3"],
        vec!["demo", "--delta", "0.1"],
        vec!["demo", "--steps", "2"],
        vec!["demo", "--grid-n", "12"],
        vec!["mikado", "--grid-n", "15"],
        vec!["verify", "--suite", "nope"],
    ] {
        let o = onsager(&args, dir.path());
        assert_eq!(o.status.code(), Some(2), "{args:?}: {}", stderr(&o));
    }
    let o = Command::new(env!("CARGO_BIN_EXE_onsager"))
        .args(["schedule", "--out"])
        .arg(dir.path())
        .env("ONSAGER_THREADS", "zero")
        .output()
        .unwrap();
    assert_eq!(o.status.code(), Some(2));
}

#[test]
fn verify_schedule_passes() {
    let dir = tempfile::tempdir().unwrap();
    let o = onsager(&["verify", "--suite", "schedule"], dir.path());
    assert_eq!(o.status.code(), Some(0), "{}", stderr(&o));
    let v = json(&dir.path().join("verify.json"));
    let checks = v[0]["checks"].as_array().unwrap();
    assert!(checks.len() >= 5);
    assert!(checks.iter().all(|c| c["passed"] == true));
    assert!(fs::read_to_string(dir.path().join("verify.xml")).unwrap().contains("<testsuite name=\"schedule\""));
}

#[test]
fn coarse_grid_failures_are_reported() {
    let dir = tempfile::tempdir().unwrap();
    let o = onsager(&["verify", "--suite", "spectral,osc,mikado", "--grid-n", "8"], dir.path());
    assert_eq!(o.status.code(), Some(2));
    let v = json(&dir.path().join("verify.json"));
    let osc = v.as_array().unwrap().iter().find(|r| r["suite"] == "osc").unwrap();
    assert_eq!(osc["checks"][0]["name"], "error");
    assert!(osc["checks"][0]["detail"].as_str().unwrap().contains("Nyquist"));
    assert!(fs::read_to_string(dir.path().join("verify.xml")).unwrap().contains("<failure"));
}

#[test]
fn mikado_family_written() {
    let dir = tempfile::tempdir().unwrap();
    let o = onsager(&["mikado", "--grid-n", "64"], dir.path());
    assert_eq!(o.status.code(), Some(0), "{}", stderr(&o));
    assert!(dir.path().join("pipes.f3d").exists());
    let m = json(&dir.path().join("mikado.json"));
    assert!(m["checks"].as_array().unwrap().iter().all(|c| c["passed"] == true));
    assert!(m["r0"].as_f64().unwrap() > 0.03);
}

#[test]
fn zero_energy_demo_is_trivial() {
    let dir = tempfile::tempdir().unwrap();
    let o = onsager(&["demo", "--amplitude", "0"], dir.path());
    assert_eq!(o.status.code(), Some(0), "{}", stderr(&o));
    let mut rows = csv::Reader::from_path(dir.path().join("energy.csv")).unwrap();
    let mut count = 0;
    for r in rows.records() {
        let r = r.unwrap();
        assert_eq!(r[1].parse::<f64>().unwrap(), 0.0);
        count += 1;
    }
    assert!(count > 100);
    let s = json(&dir.path().join("summary.json"));
    assert_eq!(s["r1_sup"].as_f64(), Some(0.0));
    assert!(dir.path().join("residuals.csv").exists());
}
