//! CSV and JSON serialisation of reports.
//!
//! CSV files start with `# key = value` comment lines carrying the resolved
//! configuration and generation time, then a header row and data rows.
//! Floats are written as `{:.16e}`, which round-trips every `f64` exactly.
//! JSON files hold one object with `config`, `generated_at`, `rows` and
//! `summary` keys.

use std::fmt::Write as _;
use std::fs;
use std::path::{Path, PathBuf};
use std::str::FromStr;

use chrono::{DateTime, SecondsFormat, Utc};
use serde_json::{json, Map, Value};
use sha2::{Digest, Sha256};

use crate::dynamics::Trajectory;
use crate::error::{Error, Result};
use crate::experiments::{ActivationReport, SeedSelectionReport, SweepReport};
use crate::lyapunov::PointContribution;
use crate::validation::OracleCheck;

fn names(cols: &[&str]) -> Vec<String> {
    cols.iter().map(|c| c.to_string()).collect()
}

#[derive(Debug, Clone, PartialEq)]
pub enum Cell {
    Float(f64),
    Int(u64),
    Bool(bool),
    Text(String),
    Missing,
}

impl Cell {
    fn opt(v: Option<f64>) -> Cell {
        v.map_or(Cell::Missing, Cell::Float)
    }

    fn csv(&self) -> String {
        match self {
            Cell::Float(v) => format_float(*v),
            Cell::Int(v) => v.to_string(),
            Cell::Bool(v) => v.to_string(),
            Cell::Text(s) => s.clone(),
            Cell::Missing => String::new(),
        }
    }

    fn json(&self) -> Value {
        match self {
            Cell::Float(v) => float_json(*v),
            Cell::Int(v) => json!(v),
            Cell::Bool(v) => json!(v),
            Cell::Text(s) => json!(s),
            Cell::Missing => Value::Null,
        }
    }
}

/// 17 significant digits; `NaN`, `inf` and `-inf` for non-finite values.
pub fn format_float(v: f64) -> String {
    if v.is_finite() {
        format!("{v:.16e}")
    } else {
        v.to_string()
    }
}

/// JSON has no non-finite numbers; those become strings.
fn float_json(v: f64) -> Value {
    if v.is_finite() {
        json!(v)
    } else {
        json!(v.to_string())
    }
}

/// Tabular output of one subcommand.
pub trait Report {
    fn columns(&self) -> Vec<String>;
    fn rows(&self) -> Vec<Vec<Cell>>;
    fn summary(&self) -> Value {
        Value::Null
    }
}

impl Report for SweepReport {
    fn columns(&self) -> Vec<String> {
        names(&["alpha", "seed", "lambda1", "final_loss", "degenerate", "diverged"])
    }

    fn rows(&self) -> Vec<Vec<Cell>> {
        self.rows
            .iter()
            .map(|r| {
                vec![
                    Cell::Float(r.alpha),
                    Cell::Int(r.run.seed),
                    Cell::Float(r.run.lambda1),
                    Cell::Float(r.run.final_loss),
                    Cell::Bool(r.run.degenerate),
                    Cell::Bool(r.run.diverged),
                ]
            })
            .collect()
    }

    fn summary(&self) -> Value {
        let per_alpha: Vec<Value> = self
            .summary
            .iter()
            .map(|s| {
                json!({
                    "alpha": float_json(s.alpha),
                    "mean_lambda1": Cell::opt(s.mean_lambda1).json(),
                    "mean_final_loss": Cell::opt(s.mean_final_loss).json(),
                    "usable_rows": s.usable_rows,
                    "diverged_rows": s.diverged_rows,
                })
            })
            .collect();
        json!({ "activation": self.activation, "per_alpha": per_alpha })
    }
}

impl Report for ActivationReport {
    fn columns(&self) -> Vec<String> {
        names(&["activation", "seed", "lambda1", "final_loss", "degenerate", "diverged"])
    }

    fn rows(&self) -> Vec<Vec<Cell>> {
        self.rows
            .iter()
            .map(|r| {
                vec![
                    Cell::Text(r.activation.to_string()),
                    Cell::Int(r.run.seed),
                    Cell::Float(r.run.lambda1),
                    Cell::Float(r.run.final_loss),
                    Cell::Bool(r.run.degenerate),
                    Cell::Bool(r.run.diverged),
                ]
            })
            .collect()
    }

    fn summary(&self) -> Value {
        let per_activation: Vec<Value> = self
            .summary
            .iter()
            .map(|s| {
                json!({
                    "activation": s.activation,
                    "mean_lambda1": Cell::opt(s.mean_lambda1).json(),
                    "mean_final_loss": Cell::opt(s.mean_final_loss).json(),
                    "usable_rows": s.usable_rows,
                    "lambda_rank": s.lambda_rank,
                    "loss_rank": s.loss_rank,
                })
            })
            .collect();
        json!({
            "alpha": float_json(self.alpha),
            "per_activation": per_activation,
            "lambda_argmin": self.lambda_argmin,
            "loss_argmin": self.loss_argmin,
            "ranks_agree": self.ranks_agree,
        })
    }
}

impl Report for SeedSelectionReport {
    fn columns(&self) -> Vec<String> {
        names(&[
            "seed",
            "initial_loss",
            "kept",
            "local_lambda1",
            "final_loss",
            "degenerate",
            "diverged",
        ])
    }

    fn rows(&self) -> Vec<Vec<Cell>> {
        self.rows
            .iter()
            .map(|r| {
                vec![
                    Cell::Int(r.seed),
                    Cell::Float(r.initial_loss),
                    Cell::Bool(r.kept),
                    Cell::Float(r.local_lambda1),
                    Cell::Float(r.final_loss),
                    Cell::Bool(r.degenerate),
                    Cell::Bool(r.diverged),
                ]
            })
            .collect()
    }

    fn summary(&self) -> Value {
        json!({
            "alpha": float_json(self.alpha),
            "probe_steps": self.probe_steps,
            "eps_lb": float_json(self.bounds.eps_lb),
            "eps_ub": float_json(self.bounds.eps_ub),
            "survivors": self.survivors,
            "spearman_rho": Cell::opt(self.spearman_rho).json(),
            "recommended_seed": self.recommended_seed,
        })
    }
}

/// Validation table: one row per reference system.
#[derive(Debug, Clone, PartialEq)]
pub struct ValidationReport {
    pub checks: Vec<OracleCheck>,
}

impl ValidationReport {
    pub fn passed(&self) -> bool {
        self.checks.iter().all(|c| c.pass)
    }
}

impl Report for ValidationReport {
    fn columns(&self) -> Vec<String> {
        names(&["system", "expected", "estimated", "tolerance", "units", "pass"])
    }

    fn rows(&self) -> Vec<Vec<Cell>> {
        self.checks
            .iter()
            .map(|c| {
                vec![
                    Cell::Text(c.system.clone()),
                    Cell::Float(c.expected),
                    Cell::Float(c.estimated),
                    Cell::Float(c.tolerance),
                    Cell::Text(c.units.to_string()),
                    Cell::Bool(c.pass),
                ]
            })
            .collect()
    }

    fn summary(&self) -> Value {
        json!({ "passed": self.passed() })
    }
}

/// A trajectory as rows of (step, time, state components, optional loss).
pub struct TrajectoryReport<'a>(pub &'a Trajectory);

impl Report for TrajectoryReport<'_> {
    fn columns(&self) -> Vec<String> {
        let mut cols = names(&["step", "time"]);
        cols.extend((0..self.0.dim()).map(|k| format!("x{k}")));
        if self.0.losses().is_some() {
            cols.push("loss".into());
        }
        cols
    }

    fn rows(&self) -> Vec<Vec<Cell>> {
        let t = self.0;
        (0..t.len())
            .map(|i| {
                let mut row = vec![Cell::Int(i as u64), Cell::Float(i as f64 * t.dt())];
                row.extend(t.state(i).iter().map(|&v| Cell::Float(v)));
                if let Some(l) = t.losses() {
                    row.push(Cell::Float(l[i]));
                }
                row
            })
            .collect()
    }

    fn summary(&self) -> Value {
        json!({ "len": self.0.len(), "dim": self.0.dim(), "dt": float_json(self.0.dt()), "diverged": self.0.diverged() })
    }
}

/// Per-reference-point estimator diagnostics.
pub struct ContributionsReport<'a>(pub &'a [PointContribution]);

impl Report for ContributionsReport<'_> {
    fn columns(&self) -> Vec<String> {
        names(&["i", "neighbors", "d0", "dtau", "log_ratio"])
    }

    fn rows(&self) -> Vec<Vec<Cell>> {
        self.0
            .iter()
            .map(|c| {
                vec![
                    Cell::Int(c.index as u64),
                    Cell::Int(c.neighbors as u64),
                    Cell::Float(c.d0),
                    Cell::Float(c.dtau),
                    Cell::Float(c.log_ratio),
                ]
            })
            .collect()
    }
}

#[derive(Debug, Clone, Copy, PartialEq, Eq)]
pub enum Format {
    Csv,
    Json,
    Both,
}

impl FromStr for Format {
    type Err = String;

    fn from_str(s: &str) -> std::result::Result<Self, Self::Err> {
        match s {
            "csv" => Ok(Format::Csv),
            "json" => Ok(Format::Json),
            "both" => Ok(Format::Both),
            _ => Err(format!("unknown format `{s}` (expected csv, json or both)")),
        }
    }
}

/// Provenance shared by every file of one run.
#[derive(Debug, Clone)]
pub struct OutputMeta {
    pub subcommand: String,
    pub config: Vec<(&'static str, String)>,
    pub seeds: Vec<u64>,
    pub generated_at: DateTime<Utc>,
}

impl OutputMeta {
    /// First 12 hex digits of SHA-256 over the comma-joined seed list.
    pub fn seed_hash(&self) -> String {
        let joined = self.seeds.iter().map(u64::to_string).collect::<Vec<_>>().join(",");
        let digest = Sha256::digest(joined.as_bytes());
        digest[..6].iter().fold(String::new(), |mut s, b| {
            let _ = write!(s, "{b:02x}");
            s
        })
    }

    pub fn timestamp(&self) -> String {
        self.generated_at.format("%Y%m%dT%H%M%SZ").to_string()
    }

    /// `<subcommand>-<timestamp>-<seed hash>`, plus an optional suffix.
    pub fn stem(&self, suffix: Option<&str>) -> String {
        let mut s = format!("{}-{}-{}", self.subcommand, self.timestamp(), self.seed_hash());
        if let Some(suffix) = suffix {
            s.push('-');
            s.push_str(suffix);
        }
        s
    }
}

pub fn render_csv(report: &dyn Report, meta: &OutputMeta) -> Result<String> {
    let mut out = String::new();
    for (k, v) in &meta.config {
        let _ = writeln!(out, "# {k} = {v}");
    }
    let _ = writeln!(
        out,
        "# generated_at = {}",
        meta.generated_at.to_rfc3339_opts(SecondsFormat::Secs, true)
    );
    let mut w = csv::Writer::from_writer(Vec::new());
    let csv_err = |e: csv::Error| Error::Io(e.to_string());
    w.write_record(report.columns()).map_err(csv_err)?;
    for row in report.rows() {
        w.write_record(row.iter().map(Cell::csv)).map_err(csv_err)?;
    }
    let bytes = w.into_inner().map_err(|e| Error::Io(e.to_string()))?;
    out.push_str(std::str::from_utf8(&bytes).map_err(|e| Error::Io(e.to_string()))?);
    Ok(out)
}

pub fn render_json(report: &dyn Report, meta: &OutputMeta) -> Result<String> {
    let config: Map<String, Value> = meta
        .config
        .iter()
        .map(|(k, v)| (k.to_string(), Value::String(v.clone())))
        .collect();
    let columns = report.columns();
    let rows: Vec<Value> = report
        .rows()
        .iter()
        .map(|row| {
            Value::Object(
                columns
                    .iter()
                    .zip(row)
                    .map(|(c, cell)| (c.to_string(), cell.json()))
                    .collect(),
            )
        })
        .collect();
    let doc = json!({
        "subcommand": meta.subcommand,
        "generated_at": meta.generated_at.to_rfc3339_opts(SecondsFormat::Secs, true),
        "config": config,
        "rows": rows,
        "summary": report.summary(),
    });
    let mut s = serde_json::to_string_pretty(&doc).map_err(|e| Error::Io(e.to_string()))?;
    s.push('\n');
    Ok(s)
}

/// Writes `report` in the requested format(s) and returns the paths.
pub fn write_report(
    report: &dyn Report,
    meta: &OutputMeta,
    suffix: Option<&str>,
    format: Format,
    output_dir: &Path,
) -> Result<Vec<PathBuf>> {
    fs::create_dir_all(output_dir).map_err(|e| Error::Io(format!("{}: {e}", output_dir.display())))?;
    let stem = meta.stem(suffix);
    let mut paths = Vec::new();
    let mut emit = |ext: &str, body: String| -> Result<()> {
        let path = output_dir.join(format!("{stem}.{ext}"));
        fs::write(&path, body).map_err(|e| Error::Io(format!("{}: {e}", path.display())))?;
        paths.push(path);
        Ok(())
    };
    if matches!(format, Format::Csv | Format::Both) {
        emit("csv", render_csv(report, meta)?)?;
    }
    if matches!(format, Format::Json | Format::Both) {
        emit("json", render_json(report, meta)?)?;
    }
    Ok(paths)
}

#[cfg(test)]
mod tests {
    use super::*;
    use crate::experiments::{RunRow, SweepRow};
    use crate::mlp::ActivationKind;
    use chrono::TimeZone;

    fn meta() -> OutputMeta {
        OutputMeta {
            subcommand: "sweep-lr".into(),
            config: vec![("steps", "10".into())],
            seeds: vec![1, 2, 3],
            generated_at: Utc.with_ymd_and_hms(2024, 1, 2, 3, 4, 5).unwrap(),
        }
    }

    fn sweep() -> SweepReport {
        let rows = [0.1, 0.2]
            .iter()
            .flat_map(|&alpha| {
                (1..=3).map(move |seed| SweepRow {
                    alpha,
                    run: RunRow {
                        seed,
                        lambda1: 1.0 / 3.0 * seed as f64,
                        final_loss: 0.25,
                        degenerate: false,
                        diverged: false,
                    },
                })
            })
            .collect();
        SweepReport {
            activation: ActivationKind::Sigmoid,
            rows,
            summary: vec![],
        }
    }

    #[test]
    fn sweep_csv_schema() {
        let text = render_csv(&sweep(), &meta()).unwrap();
        let data: Vec<&str> = text.lines().filter(|l| !l.starts_with('#')).collect();
        assert_eq!(data[0], "alpha,seed,lambda1,final_loss,degenerate,diverged");
        assert_eq!(data.len(), 7);
        assert!(text.starts_with("# steps = 10\n"));
    }

    #[test]
    fn floats_round_trip() {
        for v in [1.0 / 3.0, -2.5e-300, 6.02214076e23, f64::MIN_POSITIVE, 0.1 + 0.2, -0.0] {
            assert_eq!(format_float(v).parse::<f64>().unwrap().to_bits(), v.to_bits());
        }
        assert!(format_float(f64::NAN).parse::<f64>().unwrap().is_nan());
    }

    #[test]
    fn both_formats_and_names() {
        let dir = tempfile::tempdir().unwrap();
        let paths = write_report(&sweep(), &meta(), None, Format::Both, dir.path()).unwrap();
        assert_eq!(paths.len(), 2);
        let name = paths[0].file_name().unwrap().to_str().unwrap();
        assert!(name.starts_with("sweep-lr-20240102T030405Z-"), "{name}");
        assert!(name.ends_with(".csv"));
        let doc: Value = serde_json::from_str(&fs::read_to_string(&paths[1]).unwrap()).unwrap();
        for key in ["config", "rows", "summary"] {
            assert!(doc.get(key).is_some(), "{key}");
        }
        assert_eq!(doc["rows"].as_array().unwrap().len(), 6);
    }

    #[test]
    fn seed_hash_depends_on_seeds() {
        let a = meta();
        let mut b = meta();
        b.seeds = vec![1, 2, 4];
        assert_eq!(a.seed_hash().len(), 12);
        assert_ne!(a.seed_hash(), b.seed_hash());
    }
}
