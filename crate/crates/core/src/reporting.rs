//! Run artifacts: convergence histories, JSON reports, file manifests and
//! a text summary over repeated runs.
//!
//! Files are written once. An existing file is only replaced when the
//! caller passes `force`.

use std::fmt::Write as _;
use std::fs::{self, OpenOptions};
use std::io::Write as _;
use std::path::{Path, PathBuf};

use serde::{Deserialize, Serialize};
use sha2::{Digest, Sha256};

use crate::classifier::{DesignRecord, EventLabel};
use crate::driver::{AnalysisResult, RunConfig, Termination};
use crate::error::{config, Error, Result};
use crate::estimator::{ConvergenceHistory, EstimateRecord, HistoryRow};
use crate::sensitivity::SensitivityResult;

pub const SCHEMA: &str = "rare-ring/1";
pub const HISTORY_HEADER: &str = "n_sim,psi,label,p_hat,cov,r_inner,r_outer,n_rare";

pub const HISTORY_CSV: &str = "history.csv";
pub const HISTORY_JSON: &str = "history.json";
pub const REPORT_JSON: &str = "report.json";
pub const MANIFEST_JSON: &str = "manifest.json";

#[derive(Debug, Clone, PartialEq, Eq, Serialize, Deserialize)]
pub struct ManifestEntry {
    /// File name relative to the output directory.
    pub file: String,
    pub bytes: u64,
    pub sha256: String,
}

#[derive(Debug, Clone, Copy, PartialEq, Eq, Default)]
pub enum HistoryFormat {
    #[default]
    Csv,
    Json,
}

/// Writes `bytes` to `path`, refusing to replace an existing file unless
/// `force` is set.
pub fn write_artifact(path: &Path, bytes: &[u8], force: bool) -> Result<ManifestEntry> {
    let mut opts = OpenOptions::new();
    opts.write(true);
    if force {
        opts.create(true).truncate(true);
    } else {
        opts.create_new(true);
    }
    let mut file = opts.open(path).map_err(|e| match e.kind() {
        std::io::ErrorKind::AlreadyExists => config(format!(
            "{} already exists; use force to overwrite",
            path.display()
        )),
        _ => Error::Io(e),
    })?;
    file.write_all(bytes)?;
    file.sync_all()?;
    Ok(manifest_entry(path, bytes))
}

fn manifest_entry(path: &Path, bytes: &[u8]) -> ManifestEntry {
    let digest = Sha256::digest(bytes);
    let mut hex = String::with_capacity(64);
    for b in digest {
        let _ = write!(hex, "{b:02x}");
    }
    ManifestEntry {
        file: path
            .file_name()
            .map_or_else(String::new, |f| f.to_string_lossy().into_owned()),
        bytes: bytes.len() as u64,
        sha256: hex,
    }
}

/// Recomputes the entry for a file on disk.
pub fn hash_file(path: &Path) -> Result<ManifestEntry> {
    Ok(manifest_entry(path, &fs::read(path)?))
}

fn sci(v: f64) -> String {
    format!("{v:.11e}")
}

/// History as CSV text: a header, then one LF-terminated row per record.
pub fn history_csv(history: &ConvergenceHistory) -> Result<String> {
    let mut out = String::from(HISTORY_HEADER);
    out.push('\n');
    for r in history.rows() {
        if r.label.contains([',', '\n', '\r', '"']) {
            return Err(config(format!(
                "label {:?} cannot be written to CSV",
                r.label
            )));
        }
        let _ = writeln!(
            out,
            "{},{},{},{},{},{},{},{}",
            r.n_sim,
            sci(r.psi),
            r.label,
            sci(r.p_hat),
            sci(r.cov),
            sci(r.r_inner),
            sci(r.r_outer),
            r.n_rare
        );
    }
    Ok(out)
}

pub fn write_history_csv(
    history: &ConvergenceHistory,
    path: &Path,
    force: bool,
) -> Result<ManifestEntry> {
    if history.is_empty() {
        return Err(config("history is empty"));
    }
    write_artifact(path, history_csv(history)?.as_bytes(), force)
}

pub fn write_history_json(
    history: &ConvergenceHistory,
    path: &Path,
    force: bool,
) -> Result<ManifestEntry> {
    if history.is_empty() {
        return Err(config("history is empty"));
    }
    let mut text = serde_json::to_string_pretty(history)?;
    text.push('\n');
    write_artifact(path, text.as_bytes(), force)
}

pub fn parse_history_csv(text: &str) -> Result<ConvergenceHistory> {
    let mut lines = text.lines();
    if lines.next() != Some(HISTORY_HEADER) {
        return Err(config("history CSV header mismatch"));
    }
    let mut history = ConvergenceHistory::new();
    for (i, line) in lines.enumerate() {
        let bad = || config(format!("malformed history row {}: {line}", i + 1));
        let f: Vec<&str> = line.split(',').collect();
        if f.len() != 8 {
            return Err(bad());
        }
        let num = |s: &str| s.parse::<f64>().map_err(|_| bad());
        history.push(HistoryRow {
            n_sim: f[0].parse().map_err(|_| bad())?,
            psi: num(f[1])?,
            label: f[2].to_string(),
            p_hat: num(f[3])?,
            cov: num(f[4])?,
            r_inner: num(f[5])?,
            r_outer: num(f[6])?,
            n_rare: f[7].parse().map_err(|_| bad())?,
        })?;
    }
    Ok(history)
}

pub fn read_history_csv(path: &Path) -> Result<ConvergenceHistory> {
    parse_history_csv(&fs::read_to_string(path)?)
}

#[derive(Debug, Clone, Copy, PartialEq, Serialize, Deserialize)]
pub struct ReferenceComparison {
    pub p_ref: f64,
    /// p̂ / p_ref for the failure label.
    pub ratio: f64,
}

/// Everything worth keeping from a run.
#[derive(Debug, Clone, Serialize, Deserialize)]
pub struct RunReport {
    pub schema: String,
    pub benchmark: Option<String>,
    pub config: RunConfig,
    pub termination: Termination,
    pub n_sim: usize,
    pub estimates: Vec<EstimateRecord>,
    pub localized: Vec<EstimateRecord>,
    pub sensitivities: Vec<SensitivityResult>,
    pub reference: Option<ReferenceComparison>,
    pub design: DesignRecord,
    /// Files written alongside the report.
    pub manifest: Vec<ManifestEntry>,
}

impl RunReport {
    pub fn new(
        benchmark: Option<&str>,
        config: &RunConfig,
        result: &AnalysisResult,
        p_ref: Option<f64>,
    ) -> Self {
        let reference = p_ref.map(|p_ref| ReferenceComparison {
            p_ref,
            ratio: result.p_failure() / p_ref,
        });
        RunReport {
            schema: SCHEMA.to_string(),
            benchmark: benchmark.map(str::to_string),
            config: config.clone(),
            termination: result.termination,
            n_sim: result.design.len(),
            estimates: result.estimates.clone(),
            localized: result.localized.clone(),
            sensitivities: result.sensitivities.clone(),
            reference,
            design: result.design.clone().into(),
            manifest: Vec::new(),
        }
    }

    pub fn p_failure(&self) -> f64 {
        self.failure_estimate().map_or(0.0, |r| r.p_hat)
    }

    pub fn failure_estimate(&self) -> Option<&EstimateRecord> {
        self.estimates
            .iter()
            .find(|r| r.label == EventLabel::FAILURE)
    }

    pub fn outcome(&self) -> RunOutcome {
        RunOutcome {
            name: self.benchmark.clone().unwrap_or_else(|| "external".into()),
            n_sim: self.n_sim,
            p_hat: self.p_failure(),
            cov: self.failure_estimate().map_or(f64::INFINITY, |r| r.cov),
            p_ref: self.reference.map(|r| r.p_ref),
        }
    }

    pub fn validate(&self) -> Result<()> {
        if self.schema != SCHEMA {
            return Err(config(format!(
                "unsupported report schema {:?}",
                self.schema
            )));
        }
        if self.design.points.len() != self.n_sim {
            return Err(config("report n_sim disagrees with its design"));
        }
        self.config.validate()
    }
}

pub fn write_report_json(report: &RunReport, path: &Path, force: bool) -> Result<ManifestEntry> {
    let mut text = serde_json::to_string_pretty(report)?;
    text.push('\n');
    write_artifact(path, text.as_bytes(), force)
}

pub fn read_report_json(path: &Path) -> Result<RunReport> {
    let report: RunReport = serde_json::from_str(&fs::read_to_string(path)?)?;
    report.validate()?;
    Ok(report)
}

/// Writes the history, the report and a manifest covering both into
/// `dir`, creating it if needed. Returns the manifest.
pub fn write_run_outputs(
    dir: &Path,
    report: &mut RunReport,
    history: &ConvergenceHistory,
    format: HistoryFormat,
    force: bool,
) -> Result<Vec<ManifestEntry>> {
    fs::create_dir_all(dir)?;
    let paths: Vec<PathBuf> = [HISTORY_CSV, HISTORY_JSON, REPORT_JSON, MANIFEST_JSON]
        .iter()
        .map(|f| dir.join(f))
        .collect();
    if !force {
        if let Some(p) = paths.iter().find(|p| p.exists()) {
            return Err(config(format!(
                "{} already exists; use force to overwrite",
                p.display()
            )));
        }
    }
    let hist = match format {
        HistoryFormat::Csv => write_history_csv(history, &paths[0], force)?,
        HistoryFormat::Json => write_history_json(history, &paths[1], force)?,
    };
    report.manifest = vec![hist.clone()];
    let rep = write_report_json(report, &paths[2], force)?;
    let manifest = vec![hist, rep];
    let mut text = serde_json::to_string_pretty(&manifest)?;
    text.push('\n');
    write_artifact(&paths[3], text.as_bytes(), force)?;
    Ok(manifest)
}

/// The numbers [`summarize`] needs from one run.
#[derive(Debug, Clone, PartialEq)]
pub struct RunOutcome {
    pub name: String,
    pub n_sim: usize,
    pub p_hat: f64,
    pub cov: f64,
    pub p_ref: Option<f64>,
}

#[derive(Debug, Clone, PartialEq)]
pub struct SummaryRow {
    pub name: String,
    pub runs: usize,
    pub n_sim: f64,
    pub p_hat: f64,
    pub cov: f64,
    pub ratio: Option<f64>,
}

/// Median of the values, averaging the middle pair for even counts.
/// NaNs sort last.
pub fn median(values: &[f64]) -> f64 {
    if values.is_empty() {
        return f64::NAN;
    }
    let mut v = values.to_vec();
    v.sort_by(f64::total_cmp);
    let m = v.len() / 2;
    if v.len() % 2 == 1 {
        v[m]
    } else {
        0.5 * (v[m - 1] + v[m])
    }
}

/// Per-name medians, in order of first appearance.
pub fn summary_rows(outcomes: &[RunOutcome]) -> Vec<SummaryRow> {
    let mut names: Vec<&str> = Vec::new();
    for o in outcomes {
        if !names.contains(&o.name.as_str()) {
            names.push(&o.name);
        }
    }
    names
        .into_iter()
        .map(|name| {
            let group: Vec<&RunOutcome> = outcomes.iter().filter(|o| o.name == name).collect();
            let col =
                |f: fn(&RunOutcome) -> f64| median(&group.iter().map(|o| f(o)).collect::<Vec<_>>());
            let p_hat = col(|o| o.p_hat);
            SummaryRow {
                name: name.to_string(),
                runs: group.len(),
                n_sim: col(|o| o.n_sim as f64),
                p_hat,
                cov: col(|o| o.cov),
                ratio: group[0].p_ref.map(|p| p_hat / p),
            }
        })
        .collect()
}

/// Fixed-width table with columns name, n_sim, p_hat, cov, ratio.
pub fn summarize(outcomes: &[RunOutcome]) -> String {
    let mut out = format!(
        "{:<14} {:>6} {:>12} {:>9} {:>7}\n",
        "name", "n_sim", "p_hat", "cov", "ratio"
    );
    for r in summary_rows(outcomes) {
        let ratio = r
            .ratio
            .map_or_else(|| "-".to_string(), |v| format!("{v:.3}"));
        let _ = writeln!(
            out,
            "{:<14} {:>6} {:>12.4e} {:>9.4} {:>7}",
            r.name, r.n_sim, r.p_hat, r.cov, ratio
        );
    }
    out
}

#[cfg(test)]
mod tests {
    use super::*;

    fn row(n: usize, label: &str, p: f64) -> HistoryRow {
        HistoryRow {
            n_sim: n,
            psi: if n == 1 { f64::NAN } else { 1.0 / 3.0 },
            label: label.into(),
            p_hat: p,
            cov: if p > 0.0 {
                0.1234567890123
            } else {
                f64::INFINITY
            },
            r_inner: f64::NAN,
            r_outer: 5.123456789012345,
            n_rare: 0,
        }
    }

    #[test]
    fn one_row_gives_two_lines() {
        let mut h = ConvergenceHistory::new();
        h.push(row(1, "failure", 0.0)).unwrap();
        let text = history_csv(&h).unwrap();
        assert_eq!(text.lines().count(), 2);
        assert!(!text.contains('\r') && text.ends_with('\n'));
        assert!(text.contains(",5.12345678901e0,"));
    }

    #[test]
    fn csv_round_trip() {
        let mut h = ConvergenceHistory::new();
        h.push(row(1, "failure", 0.0)).unwrap();
        h.push(row(7, "failure", 2.58207731e-3)).unwrap();
        h.push(row(7, "state_3", 1e-9)).unwrap();
        let back = parse_history_csv(&history_csv(&h).unwrap()).unwrap();
        assert_eq!(back.len(), 3);
        for (a, b) in h.rows().iter().zip(back.rows()) {
            assert_eq!(format!("{:.11e}", a.p_hat), format!("{:.11e}", b.p_hat));
            assert_eq!(a.label, b.label);
            assert_eq!(a.psi.is_nan(), b.psi.is_nan());
            assert_eq!(a.cov.is_infinite(), b.cov.is_infinite());
            assert!(a.r_outer == b.r_outer || (a.r_outer - b.r_outer).abs() < 1e-11 * a.r_outer);
        }
        assert!(parse_history_csv("bad\n").is_err());
        assert!(parse_history_csv(&format!("{HISTORY_HEADER}\n1,2\n")).is_err());
    }

    #[test]
    fn refuses_overwrite() {
        let dir = tempfile::tempdir().unwrap();
        let p = dir.path().join("a.txt");
        let e = write_artifact(&p, b"one", false).unwrap();
        assert_eq!(e.bytes, 3);
        assert_eq!(e.file, "a.txt");
        assert!(matches!(
            write_artifact(&p, b"two", false),
            Err(Error::Config(_))
        ));
        write_artifact(&p, b"three", true).unwrap();
        assert_eq!(fs::read(&p).unwrap(), b"three");
        assert_eq!(hash_file(&p).unwrap().sha256.len(), 64);
    }

    #[test]
    fn sha256_known_value() {
        let e = manifest_entry(Path::new("x"), b"abc");
        assert_eq!(
            e.sha256,
            "ba7816bf8f01cfea414140de5dae2223b00361a396177a9cb410ff61f20015ad"
        );
    }

    #[test]
    fn medians_and_table() {
        assert_eq!(median(&[3.0, 1.0, 2.0]), 2.0);
        assert_eq!(median(&[4.0, 1.0, 2.0, 3.0]), 2.5);
        let one = RunOutcome {
            name: "wavy_circle".into(),
            n_sim: 200,
            p_hat: 2.5e-3,
            cov: 0.01,
            p_ref: Some(2.5e-3),
        };
        let table = summarize(std::slice::from_ref(&one));
        assert_eq!(table.lines().count(), 2);
        let head: Vec<&str> = table.lines().next().unwrap().split_whitespace().collect();
        assert_eq!(head, ["name", "n_sim", "p_hat", "cov", "ratio"]);
        let mut two = one.clone();
        two.name = "other".into();
        two.p_ref = None;
        let rows = summary_rows(&[one.clone(), two, one]);
        assert_eq!(rows.len(), 2);
        assert_eq!(rows[0].runs, 2);
        assert_eq!(rows[0].ratio, Some(1.0));
        assert_eq!(rows[1].ratio, None);
    }
}
