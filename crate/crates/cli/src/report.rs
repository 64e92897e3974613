//! Aggregation of finished runs into `report.md` and a `report/` bundle.

use std::collections::BTreeMap;
use std::fmt::Write as _;
use std::path::{Path, PathBuf};

use thiserror::Error;

use crate::record::{show, RunRecord, TableSummary, RECORD_FILE};

#[derive(Debug, Error)]
pub enum ReportError {
    #[error("no {RECORD_FILE} in {} or its subdirectories", .0.display())]
    NoRuns(PathBuf),
    #[error("missing artifacts: {}", .0.iter().map(|p| p.display().to_string()).collect::<Vec<_>>().join(", "))]
    MissingArtifacts(Vec<PathBuf>),
    #[error("{0}")]
    Io(#[from] std::io::Error),
    #[error("{0:#}")]
    Other(#[from] anyhow::Error),
}

impl ReportError {
    /// Both flavors of absent input.
    pub fn is_missing_artifacts(&self) -> bool {
        matches!(self, ReportError::NoRuns(_) | ReportError::MissingArtifacts(_))
    }
}

/// A loaded run and the directory it lives in.
pub struct Run {
    pub dir: PathBuf,
    pub record: RunRecord,
}

/// Finds run records in `root` and in its immediate subdirectories, sorted by
/// path.
pub fn discover(root: &Path) -> Result<Vec<Run>, ReportError> {
    let mut dirs = Vec::new();
    if root.join(RECORD_FILE).is_file() {
        dirs.push(root.to_owned());
    }
    if root.is_dir() {
        for entry in std::fs::read_dir(root)? {
            let p = entry?.path();
            if p.join(RECORD_FILE).is_file() {
                dirs.push(p);
            }
        }
    }
    dirs.sort();
    if dirs.is_empty() {
        return Err(ReportError::NoRuns(root.to_owned()));
    }
    let mut runs = Vec::new();
    let mut missing = Vec::new();
    for dir in dirs {
        let record = RunRecord::load(&dir)?;
        missing.extend(record.files.iter().map(|f| dir.join(f)).filter(|p| !p.is_file()));
        runs.push(Run { dir, record });
    }
    if !missing.is_empty() {
        return Err(ReportError::MissingArtifacts(missing));
    }
    Ok(runs)
}

fn label(root: &Path, dir: &Path) -> String {
    match dir.strip_prefix(root) {
        Ok(p) if p.as_os_str().is_empty() => ".".into(),
        Ok(p) => p.display().to_string(),
        Err(_) => dir.display().to_string(),
    }
}

fn render(root: &Path, runs: &[Run]) -> String {
    let mut md = String::from("# Experiment report\n\n## Runs\n\n");
    md.push_str("| run | mode | seed | workers | wall time (s) | verdicts |\n|---|---|---|---|---|---|\n");
    for r in runs {
        let passed = r.record.verdicts.iter().filter(|v| v.pass).count();
        let _ = writeln!(
            md,
            "| {} | {} | {} | {} | {:.1} | {passed}/{} pass |",
            label(root, &r.dir),
            r.record.mode,
            r.record.seed,
            r.record.workers,
            r.record.wall_time_s,
            r.record.verdicts.len()
        );
    }

    let mut by_inequality: BTreeMap<&str, Vec<(&Run, &TableSummary)>> = BTreeMap::new();
    for r in runs {
        for t in &r.record.tables {
            by_inequality.entry(&t.inequality).or_default().push((r, t));
        }
    }
    md.push_str("\n## Bound ratios\n");
    for (inequality, rows) in &by_inequality {
        let _ = writeln!(md, "\n### {inequality}\n");
        md.push_str("| run | file | rows | sup | median | trend slope |\n|---|---|---|---|---|---|\n");
        for (r, t) in rows {
            let _ = writeln!(
                md,
                "| {} | {} | {} | {} | {} | {} (in log {}) |",
                label(root, &r.dir),
                t.file,
                t.rows,
                show(t.sup),
                show(t.median),
                show(t.trend_slope),
                t.trend_in
            );
        }
    }

    md.push_str("\n## Verdicts\n");
    for r in runs {
        let _ = writeln!(md, "\n### {}\n", label(root, &r.dir));
        if r.record.verdicts.is_empty() {
            md.push_str("No verdicts.\n");
        }
        for v in &r.record.verdicts {
            let _ = writeln!(
                md,
                "- **{}** {}: {}",
                if v.pass { "PASS" } else { "FAIL" },
                v.name,
                v.detail
            );
        }
    }
    md
}

/// Writes `report.md` and the `report/` bundle into `root`. Returns the path
/// of `report.md`.
pub fn write_report(root: &Path) -> Result<PathBuf, ReportError> {
    let runs = discover(root)?;
    let bundle = root.join("report");
    std::fs::create_dir_all(&bundle)?;
    let mut w = csv::Writer::from_path(bundle.join("tables.csv")).map_err(anyhow::Error::from)?;
    w.write_record([
        "run",
        "inequality",
        "file",
        "rows",
        "sup",
        "median",
        "trend_slope",
        "trend_in",
    ])
    .map_err(anyhow::Error::from)?;
    let cell = |v: Option<f64>| v.map_or_else(String::new, |v| v.to_string());
    for r in &runs {
        let name = label(root, &r.dir);
        for t in &r.record.tables {
            w.write_record([
                name.clone(),
                t.inequality.clone(),
                t.file.clone(),
                t.rows.to_string(),
                cell(t.sup),
                cell(t.median),
                cell(t.trend_slope),
                t.trend_in.clone(),
            ])
            .map_err(anyhow::Error::from)?;
        }
        for f in r.record.files.iter().filter(|f| f.ends_with(".csv")) {
            let flat = format!("{}__{}", name.replace(['/', '.'], "_"), f.replace('/', "_"));
            std::fs::copy(r.dir.join(f), bundle.join(flat.trim_start_matches('_')))?;
        }
    }
    w.flush()?;
    let path = root.join("report.md");
    std::fs::write(&path, render(root, &runs))?;
    Ok(path)
}

/// True when every verdict of every discovered run passed.
pub fn all_passed(root: &Path) -> Result<bool, ReportError> {
    Ok(discover(root)?.iter().all(|r| r.record.passed()))
}
