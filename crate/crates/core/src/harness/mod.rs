//! Configuration, suite orchestration and report emission.
//!
//! [`run_suite`] executes the checks in dependency order (the background is
//! built once and shared by the later checks). Reports are deterministic for
//! a fixed configuration; wall-clock timings are returned separately.

mod checks;
pub mod config;
pub mod report;

use std::path::{Path, PathBuf};
use std::time::Instant;

pub use config::{ExperimentConfig, CHECK_NAMES};
pub use report::{
    emit_plots, emit_plots_from, CheckResult, Comparison, Fingerprint, Measurement, PlotData, Provenance, RunReport,
    Status, Timings,
};

use crate::error::Result;
use checks::{run_check, Context};

type CheckFn = fn(&mut Context, &mut CheckResult) -> Result<()>;

/// (name, criterion, expected fail, body, seeded). Seeded checks are re-run by
/// the determinism check.
const PLAN: [(&str, u32, bool, CheckFn, bool); 12] = [
    ("flattening", 1, false, checks::flattening, true),
    ("phi_bound", 2, false, checks::phi_bound, false),
    ("phase_lemma", 3, false, checks::phase_lemma, true),
    ("poisson_convergence", 4, false, checks::poisson_convergence, false),
    ("expansion", 5, false, checks::expansion, false),
    ("m_eta", 6, false, checks::m_eta_properties, true),
    ("background", 7, false, checks::background, false),
    ("volume_identities", 8, false, checks::volume_identities, false),
    ("dw_control", 8, true, checks::dw_control, false),
    ("ricci_potentials", 9, false, checks::ricci_potentials, false),
    ("curvature", 10, false, checks::curvature, false),
    ("curvature_control", 10, true, checks::curvature_control, false),
];

fn selected(cfg: &ExperimentConfig, name: &str, expected_fail: bool) -> bool {
    if expected_fail {
        let parent = if name == "dw_control" { "volume_identities" } else { "curvature" };
        cfg.negative_controls && cfg.selected(parent)
    } else {
        cfg.selected(name)
    }
}

/// Run the suite; returns the report and per-check wall-clock seconds.
pub fn run_suite_timed(cfg: &ExperimentConfig) -> Result<(RunReport, Timings)> {
    cfg.validate()?;
    let mut cx = Context::new(cfg);
    let mut results = Vec::new();
    let mut timings = Timings::new();
    for (name, criterion, expected_fail, body, _) in PLAN {
        if !selected(cfg, name, expected_fail) {
            continue;
        }
        let start = Instant::now();
        results.push(run_check(name, criterion, expected_fail, |c| body(&mut cx, c)));
        timings.insert(name.to_string(), start.elapsed().as_secs_f64());
    }
    if cfg.selected("determinism") {
        let start = Instant::now();
        let first = results.clone();
        results.push(run_check("determinism", 11, false, |c| determinism(cfg, &first, c)));
        timings.insert("determinism".into(), start.elapsed().as_secs_f64());
    }
    let fingerprint = Fingerprint::new(&cfg.to_toml_string());
    let report = RunReport::assemble(cfg.name.clone(), cfg.seed, fingerprint, results, cx.plots);
    Ok((report, timings))
}

/// Run the suite (see [`run_suite_timed`]).
pub fn run_suite(cfg: &ExperimentConfig) -> Result<RunReport> {
    run_suite_timed(cfg).map(|(r, _)| r)
}

/// Re-run every seeded check twice in fresh contexts and compare the
/// serialized results, with each other and with the suite's own results.
fn determinism(cfg: &ExperimentConfig, first: &[CheckResult], c: &mut CheckResult) -> Result<()> {
    let mut mismatches = 0usize;
    let mut compared = 0usize;
    for (name, criterion, expected_fail, body, seeded) in PLAN {
        if !seeded {
            continue;
        }
        let rerun = || {
            let mut cx = Context::new(cfg);
            let r = run_check(name, criterion, expected_fail, |c| body(&mut cx, c));
            serde_json::to_string(&r).expect("check serializes")
        };
        let (a, b) = (rerun(), rerun());
        compared += 1;
        mismatches += (a != b) as usize;
        if let Some(orig) = first.iter().find(|r| r.name == name) {
            mismatches += (serde_json::to_string(orig).expect("check serializes") != a) as usize;
        }
    }
    c.measure("serialization_mismatches", mismatches as f64, Comparison::Le, 0.0, Provenance::Trivial);
    c.measure("checks_compared", compared as f64, Comparison::Ge, 1.0, Provenance::Trivial);
    Ok(())
}

/// Paths written by [`write_outputs`].
#[derive(Debug, Clone)]
pub struct OutputFiles {
    pub report: PathBuf,
    pub timings: PathBuf,
    pub plots: Vec<PathBuf>,
}

/// Write `report.json`, `timings.json` and the plot CSVs into `dir`.
pub fn write_outputs(report: &RunReport, timings: &Timings, dir: &Path) -> Result<OutputFiles> {
    std::fs::create_dir_all(dir)?;
    let report_path = dir.join("report.json");
    std::fs::write(&report_path, report.to_json())?;
    let timings_path = dir.join("timings.json");
    std::fs::write(&timings_path, serde_json::to_string_pretty(timings).expect("timings serialize"))?;
    let plots = emit_plots(report, &dir.join("plots"))?;
    Ok(OutputFiles { report: report_path, timings: timings_path, plots })
}

#[cfg(test)]
mod tests {
    use super::*;

    fn quick(checks: &[&str]) -> ExperimentConfig {
        ExperimentConfig { checks: checks.iter().map(|s| s.to_string()).collect(), ..ExperimentConfig::default() }
    }

    #[test]
    fn seeded_checks_are_reproducible() {
        let cfg = quick(&["flattening", "phase_lemma", "determinism"]);
        let a = run_suite(&cfg).unwrap();
        let b = run_suite(&cfg).unwrap();
        assert_eq!(a.to_json(), b.to_json());
        assert!(a.all_pass, "{:?}", a.summary_lines());
        assert_eq!(a.checks.len(), 3);
    }

    #[test]
    fn module_errors_are_recorded() {
        let mut cfg = quick(&["phase_lemma", "flattening"]);
        cfg.grids.phase_angles = 0;
        let r = run_suite(&cfg).unwrap();
        let phase = r.check("phase_lemma").unwrap();
        assert_eq!(phase.status, Status::Error);
        assert_eq!(r.check("flattening").unwrap().status, Status::Pass);
        assert!(!r.all_pass);
    }

    #[test]
    fn outputs_written() {
        let cfg = quick(&["flattening"]);
        let (r, t) = run_suite_timed(&cfg).unwrap();
        let dir = tempfile::tempdir().unwrap();
        let out = write_outputs(&r, &t, dir.path()).unwrap();
        assert_eq!(RunReport::load(&out.report).unwrap().to_json(), r.to_json());
        assert!(std::fs::read_to_string(out.timings).unwrap().contains("flattening"));
        assert_eq!(out.plots.len(), 4);
    }
}
