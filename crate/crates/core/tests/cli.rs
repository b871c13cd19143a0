use std::path::Path;
use std::process::{Command, Output};

fn conekit(args: &[&str]) -> Output {
    Command::new(env!("CARGO_BIN_EXE_conekit")).args(args).output().expect("binary runs")
}

fn stdout(o: &Output) -> String {
    String::from_utf8_lossy(&o.stdout).into_owned()
}

fn write_config(dir: &Path, body: &str) -> String {
    let p = dir.join("cfg.toml");
    std::fs::write(&p, body).unwrap();
    p.to_str().unwrap().to_string()
}

#[test]
fn empty_config_is_a_usage_error() {
    let dir = tempfile::tempdir().unwrap();
    let cfg = write_config(dir.path(), "# nothing here\n");
    let o = conekit(&["run", "--config", &cfg]);
    assert_eq!(o.status.code(), Some(2));
    assert!(String::from_utf8_lossy(&o.stderr).contains("usage"));
}

#[test]
fn unknown_check_is_a_config_error() {
    let dir = tempfile::tempdir().unwrap();
    let cfg = write_config(dir.path(), "name = \"x\"\nchecks = [\"bogus\"]\n");
    assert_eq!(conekit(&["run", "--config", &cfg]).status.code(), Some(2));
}

#[test]
fn run_writes_report_timings_and_plots() {
    let dir = tempfile::tempdir().unwrap();
    let cfg = write_config(dir.path(), "name = \"small\"\nchecks = [\"flattening\", \"phase_lemma\", \"determinism\"]\n");
    let out = dir.path().join("out");
    let o = conekit(&["run", "--config", &cfg, "--out", out.to_str().unwrap()]);
    assert!(o.status.success(), "{}", stdout(&o));
    let text = stdout(&o);
    assert!(text.contains("[pass]  1 flattening"));
    assert!(text.contains("[pass] 11 determinism"));
    let report = std::fs::read_to_string(out.join("report.json")).unwrap();
    assert!(report.contains("\"all_pass\": true"));
    assert!(!report.contains("seconds"));
    assert!(std::fs::read_to_string(out.join("timings.json")).unwrap().contains("phase_lemma"));
    for f in ["decay_fits.csv", "curvature_shells.csv", "holder_trends.csv", "checks.csv"] {
        assert!(out.join("plots").join(f).exists(), "{f}");
    }
}

#[test]
fn single_checks() {
    for sub in ["phi-bound", "m-eta", "expansion"] {
        let o = conekit(&["check", sub]);
        assert!(o.status.success(), "{sub}: {}", stdout(&o));
        assert!(stdout(&o).contains("[pass]"));
    }
}

#[test]
fn background_build_then_verify() {
    let dir = tempfile::tempdir().unwrap();
    let out = dir.path().to_str().unwrap();
    let o = conekit(&["background", "build", "--geometry", "line_bundle_p1", "--k-b", "2", "--out", out]);
    assert!(o.status.success(), "{}", stdout(&o));
    assert!(dir.path().join("u.csv").exists());
    let input = dir.path().join("background.json");
    let o = conekit(&["background", "verify", "--input", input.to_str().unwrap()]);
    assert!(o.status.success(), "{}", stdout(&o));
    assert!(stdout(&o).contains("matches stored result: true"));
}

#[test]
fn curvature_compute_writes_shells() {
    let dir = tempfile::tempdir().unwrap();
    let out = dir.path().to_str().unwrap();
    let o = conekit(&["curvature", "compute", "--beta", "0.6", "--radii", "16", "--out", out]);
    assert!(o.status.success(), "{}", stdout(&o));
    let csv = std::fs::read_to_string(dir.path().join("shells.csv")).unwrap();
    assert!(csv.lines().count() > 1);
    assert!(dir.path().join("curvature.json").exists());
}

#[test]
fn bad_geometry_is_a_config_error() {
    let o = conekit(&["background", "build", "--geometry", "torus"]);
    assert_eq!(o.status.code(), Some(2));
}
