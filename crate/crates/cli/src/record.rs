//! Run records and the artifact writer that fills them.

use std::fs::File;
use std::io::{BufWriter, Write};
use std::path::{Path, PathBuf};

use anyhow::{bail, Context};
use lorentz_core::stats::{fit_line, median};
use serde::{Deserialize, Serialize};

use crate::config::Mode;

pub const RECORD_FILE: &str = "run_record.json";
pub const CONFIG_FILE: &str = "config.toml";

#[derive(Debug, Clone, PartialEq, Serialize, Deserialize)]
pub struct Verdict {
    pub name: String,
    pub pass: bool,
    pub detail: String,
}

/// Summary of one bound-ratio table written as CSV.
#[derive(Debug, Clone, PartialEq, Serialize, Deserialize)]
pub struct TableSummary {
    /// The inequality the ratios test, e.g. `local limit bound`.
    pub inequality: String,
    pub file: String,
    pub rows: usize,
    pub sup: Option<f64>,
    pub median: Option<f64>,
    /// Slope of `log ratio` against `log x` for the table's sweep variable.
    pub trend_slope: Option<f64>,
    /// Name of the sweep variable the slope refers to.
    pub trend_in: String,
}

impl TableSummary {
    /// Summarizes positive finite ratios against a sweep variable `x`.
    pub fn from_ratios(inequality: &str, file: &str, trend_in: &str, x: &[f64], ratio: &[f64]) -> Self {
        let (lx, ly): (Vec<f64>, Vec<f64>) = x
            .iter()
            .zip(ratio)
            .filter(|(a, b)| **a > 0.0 && **b > 0.0 && b.is_finite())
            .map(|(a, b)| (a.ln(), b.ln()))
            .unzip();
        let finite: Vec<f64> = ratio.iter().copied().filter(|r| r.is_finite()).collect();
        Self {
            inequality: inequality.into(),
            file: file.into(),
            rows: ratio.len(),
            sup: finite.iter().copied().reduce(f64::max),
            median: (!finite.is_empty()).then(|| median(&finite)),
            trend_slope: fit_line(&lx, &ly).map(|f| f.slope).filter(|s| s.is_finite()),
            trend_in: trend_in.into(),
        }
    }
}

#[derive(Debug, Clone, PartialEq, Serialize, Deserialize)]
pub struct RunRecord {
    pub config_digest: String,
    pub artifact_version: String,
    pub mode: Mode,
    pub seed: u64,
    pub workers: usize,
    pub started: String,
    pub finished: String,
    pub wall_time_s: f64,
    /// Every file written, relative to the output directory, except this
    /// record itself.
    pub files: Vec<String>,
    pub verdicts: Vec<Verdict>,
    pub tables: Vec<TableSummary>,
}

impl RunRecord {
    pub fn passed(&self) -> bool {
        self.verdicts.iter().all(|v| v.pass)
    }

    pub fn load(dir: &Path) -> anyhow::Result<Self> {
        let path = dir.join(RECORD_FILE);
        let text = std::fs::read_to_string(&path).with_context(|| format!("reading {}", path.display()))?;
        serde_json::from_str(&text).with_context(|| format!("parsing {}", path.display()))
    }
}

/// One CSV cell. Floats must be finite.
#[derive(Debug, Clone, PartialEq)]
pub enum Field {
    Int(i64),
    Float(f64),
    Text(String),
}

impl From<i64> for Field {
    fn from(v: i64) -> Self {
        Field::Int(v)
    }
}

impl From<u64> for Field {
    fn from(v: u64) -> Self {
        Field::Int(v as i64)
    }
}

impl From<usize> for Field {
    fn from(v: usize) -> Self {
        Field::Int(v as i64)
    }
}

impl From<f64> for Field {
    fn from(v: f64) -> Self {
        Field::Float(v)
    }
}

impl From<bool> for Field {
    fn from(v: bool) -> Self {
        Field::Text(v.to_string())
    }
}

impl From<&str> for Field {
    fn from(v: &str) -> Self {
        Field::Text(v.into())
    }
}

impl From<String> for Field {
    fn from(v: String) -> Self {
        Field::Text(v)
    }
}

/// Builds a CSV row from heterogeneous values.
#[macro_export]
macro_rules! row {
    ($($v:expr),* $(,)?) => {
        vec![$($crate::record::Field::from($v)),*]
    };
}

/// Collects outputs of a run in one directory.
pub struct Artifacts {
    dir: PathBuf,
    pub files: Vec<String>,
    pub verdicts: Vec<Verdict>,
    pub tables: Vec<TableSummary>,
}

impl Artifacts {
    pub fn new(dir: &Path) -> anyhow::Result<Self> {
        std::fs::create_dir_all(dir).with_context(|| format!("creating {}", dir.display()))?;
        Ok(Self {
            dir: dir.to_owned(),
            files: Vec::new(),
            verdicts: Vec::new(),
            tables: Vec::new(),
        })
    }

    pub fn dir(&self) -> &Path {
        &self.dir
    }

    fn track(&mut self, name: &str) {
        if !self.files.iter().any(|f| f == name) {
            self.files.push(name.into());
        }
    }

    /// Writes `name` through `f` and records it.
    pub fn write_with<F>(&mut self, name: &str, f: F) -> anyhow::Result<()>
    where
        F: FnOnce(&mut BufWriter<File>) -> anyhow::Result<()>,
    {
        let path = self.dir.join(name);
        let mut out = BufWriter::new(File::create(&path).with_context(|| format!("creating {}", path.display()))?);
        f(&mut out)?;
        out.flush()?;
        self.track(name);
        Ok(())
    }

    /// Marks a file written by a library routine.
    pub fn adopt(&mut self, name: &str) -> anyhow::Result<()> {
        if !self.dir.join(name).is_file() {
            bail!("expected output {name} was not written");
        }
        self.track(name);
        Ok(())
    }

    /// Writes a CSV table; rejects non-finite floats.
    pub fn csv(&mut self, name: &str, header: &[&str], rows: &[Vec<Field>]) -> anyhow::Result<()> {
        for (i, row) in rows.iter().enumerate() {
            if row.len() != header.len() {
                bail!("{name}: row {i} has {} fields, header has {}", row.len(), header.len());
            }
            if let Some((j, Field::Float(v))) = row
                .iter()
                .enumerate()
                .find(|(_, f)| matches!(f, Field::Float(v) if !v.is_finite()))
            {
                bail!("{name}: non-finite value {v} in column {} of row {i}", header[j]);
            }
        }
        self.write_with(name, |out| {
            let mut w = csv::Writer::from_writer(out);
            w.write_record(header)?;
            for row in rows {
                w.write_record(row.iter().map(|f| match f {
                    Field::Int(v) => v.to_string(),
                    Field::Float(v) => v.to_string(),
                    Field::Text(s) => s.clone(),
                }))?;
            }
            w.flush()?;
            Ok(())
        })
    }

    pub fn json<T: Serialize>(&mut self, name: &str, value: &T) -> anyhow::Result<()> {
        self.write_with(name, |out| {
            serde_json::to_writer_pretty(&mut *out, value)?;
            writeln!(out)?;
            Ok(())
        })
    }

    pub fn verdict(&mut self, name: &str, pass: bool, detail: impl Into<String>) {
        self.verdicts.push(Verdict {
            name: name.into(),
            pass,
            detail: detail.into(),
        });
    }

    pub fn table(&mut self, summary: TableSummary) {
        self.tables.push(summary);
    }
}

/// Formats an optional float for humans; `n/a` when absent.
pub fn show(v: Option<f64>) -> String {
    v.map_or_else(|| "n/a".into(), |v| format!("{v:.4}"))
}
