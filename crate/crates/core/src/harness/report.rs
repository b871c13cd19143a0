//! Run reports and plot-data emission.

use std::collections::BTreeMap;
use std::fmt::Write as _;
use std::path::{Path, PathBuf};

use serde::{Deserialize, Deserializer, Serialize, Serializer};

use crate::curvature::ShellStat;
use crate::error::{ConeError, Result};
use crate::weighted_holder::Verdict;

/// Non-finite floats are written as `null` and read back as NaN.
mod nullable {
    use super::*;

    pub fn serialize<S: Serializer>(x: &f64, s: S) -> std::result::Result<S::Ok, S::Error> {
        if x.is_finite() {
            s.serialize_f64(*x)
        } else {
            s.serialize_none()
        }
    }

    pub fn deserialize<'de, D: Deserializer<'de>>(d: D) -> std::result::Result<f64, D::Error> {
        Ok(Option::<f64>::deserialize(d)?.unwrap_or(f64::NAN))
    }
}

/// Where an expected value comes from.
#[derive(Debug, Clone, Copy, PartialEq, Eq, Serialize, Deserialize)]
#[serde(rename_all = "lowercase")]
pub enum Provenance {
    /// A bound or identity stated by the underlying theory.
    Paper,
    /// Computed by an independent oracle or brute force.
    Derived,
    /// Arithmetic or schema facts.
    Trivial,
}

#[derive(Debug, Clone, Copy, PartialEq, Eq, Serialize, Deserialize)]
#[serde(rename_all = "lowercase")]
pub enum Comparison {
    /// value ≤ tolerance
    Le,
    /// value ≥ tolerance
    Ge,
    /// value > tolerance
    Gt,
    /// value < tolerance
    Lt,
}

impl Comparison {
    pub fn holds(self, value: f64, tolerance: f64) -> bool {
        match self {
            Comparison::Le => value <= tolerance,
            Comparison::Ge => value >= tolerance,
            Comparison::Gt => value > tolerance,
            Comparison::Lt => value < tolerance,
        }
    }
}

/// One measured number with the bound it is held to.
#[derive(Debug, Clone, PartialEq, Serialize, Deserialize)]
pub struct Measurement {
    pub check: String,
    pub name: String,
    #[serde(with = "nullable")]
    pub value: f64,
    pub comparison: Comparison,
    #[serde(with = "nullable")]
    pub tolerance: f64,
    pub provenance: Provenance,
    pub pass: bool,
}

#[derive(Debug, Clone, Copy, PartialEq, Eq, Serialize, Deserialize)]
#[serde(rename_all = "snake_case")]
pub enum Status {
    Pass,
    Fail,
    Error,
    /// A negative control that failed, as intended.
    ExpectedFail,
    /// A negative control that passed.
    UnexpectedPass,
}

impl Status {
    /// Whether the status counts towards a successful run.
    pub fn ok(self) -> bool {
        matches!(self, Status::Pass | Status::ExpectedFail)
    }

    pub fn label(self) -> &'static str {
        match self {
            Status::Pass => "pass",
            Status::Fail => "FAIL",
            Status::Error => "ERROR",
            Status::ExpectedFail => "expected-fail",
            Status::UnexpectedPass => "UNEXPECTED-PASS",
        }
    }
}

#[derive(Debug, Clone, PartialEq, Serialize, Deserialize)]
pub struct CheckResult {
    pub name: String,
    /// Acceptance criterion the check belongs to (1–11).
    pub criterion: u32,
    pub expected_fail: bool,
    pub status: Status,
    pub measurements: Vec<Measurement>,
    pub error: Option<String>,
}

impl CheckResult {
    pub fn new(name: &str, criterion: u32, expected_fail: bool) -> Self {
        CheckResult {
            name: name.into(),
            criterion,
            expected_fail,
            status: Status::Pass,
            measurements: Vec::new(),
            error: None,
        }
    }

    pub fn measure(&mut self, name: impl Into<String>, value: f64, comparison: Comparison, tolerance: f64, provenance: Provenance) {
        let pass = comparison.holds(value, tolerance);
        self.measurements.push(Measurement {
            check: self.name.clone(),
            name: name.into(),
            value,
            comparison,
            tolerance,
            provenance,
            pass,
        });
    }

    /// Verdicts are recorded as their rank (stable 0, inconclusive 1, diverging 2).
    pub fn verdict(&mut self, name: impl Into<String>, verdict: Verdict, want: Verdict, provenance: Provenance) {
        let rank = |v: Verdict| v as u8 as f64;
        let cmp = if want == Verdict::Diverging { Comparison::Ge } else { Comparison::Le };
        self.measure(name, rank(verdict), cmp, rank(want), provenance);
    }

    pub fn flag(&mut self, name: impl Into<String>, ok: bool, provenance: Provenance) {
        self.measure(name, ok as u8 as f64, Comparison::Ge, 1.0, provenance);
    }

    /// Set the status from the measurements (or the recorded error).
    pub fn finish(mut self) -> Self {
        let passed = self.error.is_none() && !self.measurements.is_empty() && self.measurements.iter().all(|m| m.pass);
        self.status = match (self.error.is_some(), self.expected_fail, passed) {
            (true, _, _) => Status::Error,
            (false, false, true) => Status::Pass,
            (false, false, false) => Status::Fail,
            (false, true, true) => Status::UnexpectedPass,
            (false, true, false) => Status::ExpectedFail,
        };
        self
    }
}

/// Deterministic description of the build that produced a report.
#[derive(Debug, Clone, PartialEq, Serialize, Deserialize)]
pub struct Fingerprint {
    pub crate_version: String,
    pub os: String,
    pub arch: String,
    pub config_hash: String,
}

impl Fingerprint {
    pub fn new(config_text: &str) -> Self {
        // FNV-1a over the canonical config serialization.
        let mut h: u64 = 0xcbf2_9ce4_8422_2325;
        for b in config_text.bytes() {
            h ^= b as u64;
            h = h.wrapping_mul(0x0100_0000_01b3);
        }
        Fingerprint {
            crate_version: env!("CARGO_PKG_VERSION").into(),
            os: std::env::consts::OS.into(),
            arch: std::env::consts::ARCH.into(),
            config_hash: format!("{h:016x}"),
        }
    }
}

#[derive(Debug, Clone, PartialEq, Serialize, Deserialize)]
pub struct DecayRow {
    pub case: String,
    #[serde(with = "nullable")]
    pub log_z: f64,
    #[serde(with = "nullable")]
    pub log_lhs: f64,
    #[serde(with = "nullable")]
    pub fitted_slope: f64,
}

#[derive(Debug, Clone, PartialEq, Serialize, Deserialize)]
pub struct TrendRow {
    pub quantity: String,
    pub chart: u32,
    pub level: usize,
    #[serde(with = "nullable")]
    pub seminorm: f64,
    pub growth_exponent: Option<f64>,
    pub verdict: Verdict,
}

#[derive(Debug, Clone, Default, PartialEq, Serialize, Deserialize)]
pub struct PlotData {
    pub decay_fits: Vec<DecayRow>,
    pub curvature_shells: Vec<ShellStat>,
    pub holder_trends: Vec<TrendRow>,
}

#[derive(Debug, Clone, Copy, Default, PartialEq, Eq, Serialize, Deserialize)]
pub struct Summary {
    pub passed: usize,
    pub failed: usize,
    pub errors: usize,
    pub expected_fail: usize,
    pub unexpected_pass: usize,
}

#[derive(Debug, Clone, PartialEq, Serialize, Deserialize)]
pub struct RunReport {
    pub name: String,
    pub seed: u64,
    pub fingerprint: Fingerprint,
    pub checks: Vec<CheckResult>,
    pub summary: Summary,
    pub all_pass: bool,
    pub plots: PlotData,
}

impl RunReport {
    pub fn assemble(name: String, seed: u64, fingerprint: Fingerprint, checks: Vec<CheckResult>, plots: PlotData) -> Self {
        let mut summary = Summary::default();
        for c in &checks {
            match c.status {
                Status::Pass => summary.passed += 1,
                Status::Fail => summary.failed += 1,
                Status::Error => summary.errors += 1,
                Status::ExpectedFail => summary.expected_fail += 1,
                Status::UnexpectedPass => summary.unexpected_pass += 1,
            }
        }
        let all_pass = checks.iter().all(|c| c.status.ok());
        RunReport { name, seed, fingerprint, checks, summary, all_pass, plots }
    }

    pub fn check(&self, name: &str) -> Option<&CheckResult> {
        self.checks.iter().find(|c| c.name == name)
    }

    pub fn to_json(&self) -> String {
        serde_json::to_string_pretty(self).expect("report serializes")
    }

    pub fn from_json(text: &str) -> Result<Self> {
        serde_json::from_str(text).map_err(|e| ConeError::Format(e.to_string()))
    }

    pub fn load(path: &Path) -> Result<Self> {
        let text = std::fs::read_to_string(path).map_err(|e| ConeError::Io(format!("{}: {e}", path.display())))?;
        Self::from_json(&text)
    }

    /// One line per check: `[status] criterion name`.
    pub fn summary_lines(&self) -> Vec<String> {
        self.checks
            .iter()
            .map(|c| {
                let mut line = format!("[{}] {:>2} {}", c.status.label(), c.criterion, c.name);
                if let Some(e) = &c.error {
                    let _ = write!(line, ": {e}");
                } else if let Some(m) = c.measurements.iter().find(|m| !m.pass) {
                    let _ = write!(line, ": {} = {:e} vs {:?} {:e}", m.name, m.value, m.comparison, m.tolerance);
                }
                line
            })
            .collect()
    }
}

/// Wall-clock seconds per check, kept out of the report so it stays reproducible.
pub type Timings = BTreeMap<String, f64>;

fn csv_f(x: f64) -> String {
    format!("{x:e}")
}

fn decay_csv(rows: &[DecayRow]) -> String {
    let mut s = String::from("case,log_abs_z,log_lhs,fitted_slope\n");
    for r in rows {
        let _ = writeln!(s, "{},{},{},{}", r.case, csv_f(r.log_z), csv_f(r.log_lhs), csv_f(r.fitted_slope));
    }
    s
}

fn trend_csv(rows: &[TrendRow]) -> String {
    let mut s = String::from("quantity,chart,level,seminorm,growth_exponent,verdict\n");
    for r in rows {
        let g = r.growth_exponent.map(csv_f).unwrap_or_default();
        let v = serde_json::to_value(r.verdict).ok().and_then(|v| v.as_str().map(String::from)).unwrap_or_default();
        let _ = writeln!(s, "{},{},{},{},{},{}", r.quantity, r.chart, r.level, csv_f(r.seminorm), g, v);
    }
    s
}

/// Write `decay_fits.csv`, `curvature_shells.csv`, `holder_trends.csv` and
/// `checks.csv` into `dir`; returns the written paths.
pub fn emit_plots(report: &RunReport, dir: &Path) -> Result<Vec<PathBuf>> {
    std::fs::create_dir_all(dir)?;
    let mut checks = String::from("check,criterion,measurement,value,comparison,tolerance,provenance,pass\n");
    for c in &report.checks {
        for m in &c.measurements {
            let _ = writeln!(
                checks,
                "{},{},{},{},{:?},{},{:?},{}",
                c.name,
                c.criterion,
                m.name,
                csv_f(m.value),
                m.comparison,
                csv_f(m.tolerance),
                m.provenance,
                m.pass
            );
        }
    }
    let files = [
        ("decay_fits.csv", decay_csv(&report.plots.decay_fits)),
        ("curvature_shells.csv", crate::curvature::shell_csv(&report.plots.curvature_shells)),
        ("holder_trends.csv", trend_csv(&report.plots.holder_trends)),
        ("checks.csv", checks),
    ];
    let mut out = Vec::new();
    for (name, body) in files {
        let path = dir.join(name);
        std::fs::write(&path, body)?;
        out.push(path);
    }
    Ok(out)
}

/// [`emit_plots`] for a report stored on disk.
pub fn emit_plots_from(report_path: &Path, dir: &Path) -> Result<Vec<PathBuf>> {
    if !report_path.exists() {
        return Err(ConeError::Io(format!("report not found: {}", report_path.display())));
    }
    emit_plots(&RunReport::load(report_path)?, dir)
}

#[cfg(test)]
mod tests {
    use super::*;

    fn sample() -> RunReport {
        let mut a = CheckResult::new("a", 1, false);
        a.measure("x", 0.5, Comparison::Le, 1.0, Provenance::Derived);
        let mut b = CheckResult::new("b", 10, true);
        b.verdict("trend", Verdict::Diverging, Verdict::Stable, Provenance::Derived);
        let mut c = CheckResult::new("c", 2, false);
        c.error = Some("boom".into());
        let plots = PlotData {
            decay_fits: vec![DecayRow { case: "k".into(), log_z: -1.0, log_lhs: -2.0, fitted_slope: 0.3 }],
            ..Default::default()
        };
        RunReport::assemble("t".into(), 1, Fingerprint::new("x"), vec![a.finish(), b.finish(), c.finish()], plots)
    }

    #[test]
    fn statuses_and_summary() {
        let r = sample();
        assert_eq!(r.checks[0].status, Status::Pass);
        assert_eq!(r.checks[1].status, Status::ExpectedFail);
        assert_eq!(r.checks[2].status, Status::Error);
        assert!(!r.all_pass);
        assert_eq!(r.summary.expected_fail, 1);
        assert_eq!(r.summary_lines().len(), 3);
        let empty = CheckResult::new("e", 1, false).finish();
        assert_eq!(empty.status, Status::Fail);
    }

    #[test]
    fn json_roundtrip_and_plots() {
        let r = sample();
        let back = RunReport::from_json(&r.to_json()).unwrap();
        assert_eq!(back.to_json(), r.to_json());
        let dir = tempfile::tempdir().unwrap();
        let files = emit_plots(&r, dir.path()).unwrap();
        let decay = std::fs::read_to_string(&files[0]).unwrap();
        assert!(decay.starts_with("case,log_abs_z,log_lhs,fitted_slope\n"));
        assert_eq!(decay.lines().count(), 2);
        let again = emit_plots(&r, dir.path()).unwrap();
        assert_eq!(std::fs::read_to_string(&again[0]).unwrap(), decay);
        assert!(emit_plots_from(&dir.path().join("missing.json"), dir.path()).is_err());
    }
}
