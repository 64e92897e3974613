//! Experiment configuration: parsing, validation and digest.

use std::fmt;
use std::path::{Path, PathBuf};

use lorentz_core::bounds::SlowlyVaryingFn;
use lorentz_core::geometry::{validate_config, DiskScatterer, LatticeConfig};
use lorentz_core::tower::{make_heavy_tailed_model, shipped_models, GibbsMarkovBase, SigmaProfile};
use serde::{Deserialize, Serialize};
use sha2::{Digest, Sha256};
use thiserror::Error;

#[derive(Debug, Clone, Copy, PartialEq, Eq, Serialize, Deserialize)]
#[serde(rename_all = "kebab-case")]
pub enum Mode {
    BilliardLld,
    BilliardClt,
    Tail,
    Spectral,
    Renewal,
    CorridorCorr,
    Abstract,
}

impl Mode {
    pub fn needs_lattice(self) -> bool {
        matches!(
            self,
            Mode::BilliardLld | Mode::BilliardClt | Mode::Tail | Mode::CorridorCorr
        )
    }

    pub fn needs_model(self) -> bool {
        !self.needs_lattice()
    }

    pub fn name(self) -> &'static str {
        match self {
            Mode::BilliardLld => "billiard-lld",
            Mode::BilliardClt => "billiard-clt",
            Mode::Tail => "tail",
            Mode::Spectral => "spectral",
            Mode::Renewal => "renewal",
            Mode::CorridorCorr => "corridor-corr",
            Mode::Abstract => "abstract",
        }
    }
}

impl fmt::Display for Mode {
    fn fmt(&self, f: &mut fmt::Formatter<'_>) -> fmt::Result {
        f.write_str(self.name())
    }
}

#[derive(Debug, Clone, PartialEq, Serialize, Deserialize)]
#[serde(deny_unknown_fields)]
pub struct LatticeSection {
    pub d: usize,
    pub disk: Vec<DiskScatterer>,
}

impl LatticeSection {
    pub fn to_config(&self) -> LatticeConfig {
        LatticeConfig::new(self.d, self.disk.clone())
    }
}

fn one() -> usize {
    1
}

#[derive(Debug, Clone, PartialEq, Serialize, Deserialize)]
#[serde(deny_unknown_fields)]
pub struct RunSection {
    pub mode: Mode,
    pub n_values: Vec<u64>,
    #[serde(default)]
    pub samples: u64,
    #[serde(default)]
    pub seed: u64,
    #[serde(default = "one")]
    pub workers: usize,
}

#[derive(Debug, Clone, PartialEq, Serialize, Deserialize)]
#[serde(deny_unknown_fields, default)]
pub struct BoundsSection {
    #[serde(rename = "C")]
    pub c: f64,
    pub omega: f64,
    pub eps1: f64,
    pub b: f64,
    pub delta: f64,
}

impl Default for BoundsSection {
    fn default() -> Self {
        Self {
            c: 1.0,
            omega: 1.0,
            eps1: 0.1,
            b: 1.0,
            delta: lorentz_core::spectral::DEFAULT_DELTA,
        }
    }
}

/// A built-in tower by name, or a JSON file written by `GibbsMarkovBase::to_json`.
#[derive(Debug, Clone, PartialEq, Serialize, Deserialize)]
#[serde(deny_unknown_fields)]
pub struct ModelSection {
    #[serde(default, skip_serializing_if = "Option::is_none")]
    pub builtin: Option<String>,
    #[serde(default, skip_serializing_if = "Option::is_none")]
    pub path: Option<PathBuf>,
}

/// Built-in names: the shipped models plus `heavy-tailed-<m>` for any cutoff.
pub fn builtin_model(name: &str) -> Option<GibbsMarkovBase> {
    if let Some((_, base)) = shipped_models().into_iter().find(|(n, _)| *n == name) {
        return Some(base);
    }
    let m: usize = name.strip_prefix("heavy-tailed-")?.parse().ok()?;
    make_heavy_tailed_model(m, 3.0, SigmaProfile::Unit).ok()
}

#[derive(Debug, Clone, PartialEq, Serialize, Deserialize)]
#[serde(deny_unknown_fields)]
pub struct TailSection {
    /// Defaults to `round(2^{k/2})` up to 1024.
    #[serde(default, skip_serializing_if = "Option::is_none")]
    pub thresholds: Option<Vec<u64>>,
    pub window: (u64, u64),
}

impl Default for TailSection {
    fn default() -> Self {
        Self {
            thresholds: None,
            window: (8, 256),
        }
    }
}

impl TailSection {
    pub fn thresholds(&self) -> Vec<u64> {
        self.thresholds.clone().unwrap_or_else(|| {
            let mut t: Vec<u64> = (0..=20).map(|k| 2f64.powf(k as f64 / 2.0).round() as u64).collect();
            t.dedup();
            t
        })
    }
}

#[derive(Debug, Clone, PartialEq, Serialize, Deserialize)]
#[serde(deny_unknown_fields)]
pub struct CorridorSection {
    pub p_range: (u64, u64),
    pub r_range: (u64, u64),
    #[serde(default = "unit")]
    pub c: f64,
}

fn unit() -> f64 {
    1.0
}

impl Default for CorridorSection {
    fn default() -> Self {
        Self {
            p_range: (8, 64),
            r_range: (0, 4),
            c: 1.0,
        }
    }
}

#[derive(Debug, Clone, PartialEq, Serialize, Deserialize)]
#[serde(deny_unknown_fields, default)]
pub struct SpectralSection {
    pub t_grid: Vec<f64>,
    pub h_grid: Vec<f64>,
    /// `|N|` values for the smoothed operator `A_{n,N}`, along the first axis.
    pub big_n: Vec<i64>,
}

impl Default for SpectralSection {
    fn default() -> Self {
        Self {
            t_grid: vec![0.01, 0.02, 0.05, 0.1, 0.2],
            h_grid: vec![1e-3, 3e-3, 1e-2, 3e-2],
            big_n: vec![0, 4, 16],
        }
    }
}

#[derive(Debug, Clone, PartialEq, Serialize, Deserialize)]
#[serde(deny_unknown_fields)]
pub struct AbstractSection {
    pub ell1: SlowlyVaryingFn,
    pub ell2: SlowlyVaryingFn,
    #[serde(default, skip_serializing_if = "Option::is_none")]
    pub ell3: Option<SlowlyVaryingFn>,
    /// Points where the assumption `(log x)² ℓ̃₁(x) ≤ C ℓ₂(x)` is checked.
    #[serde(default = "ass3_grid")]
    pub grid: Vec<f64>,
}

fn ass3_grid() -> Vec<f64> {
    (1..=12).map(|k| 10f64.powi(k)).collect()
}

impl Default for AbstractSection {
    fn default() -> Self {
        Self {
            ell1: SlowlyVaryingFn::one(),
            ell2: SlowlyVaryingFn::log_power(3.0),
            ell3: None,
            grid: ass3_grid(),
        }
    }
}

#[derive(Debug, Clone, PartialEq, Serialize, Deserialize)]
#[serde(deny_unknown_fields)]
pub struct ExperimentConfig {
    pub output_dir: PathBuf,
    #[serde(default, skip_serializing_if = "Option::is_none")]
    pub lattice: Option<LatticeSection>,
    pub run: RunSection,
    #[serde(default)]
    pub bounds: BoundsSection,
    #[serde(default, skip_serializing_if = "Option::is_none")]
    pub model: Option<ModelSection>,
    #[serde(default, skip_serializing_if = "Option::is_none")]
    pub tail: Option<TailSection>,
    #[serde(default, skip_serializing_if = "Option::is_none")]
    pub corridor: Option<CorridorSection>,
    #[serde(default, skip_serializing_if = "Option::is_none")]
    pub spectral: Option<SpectralSection>,
    #[serde(rename = "abstract", default, skip_serializing_if = "Option::is_none")]
    pub abstract_: Option<AbstractSection>,
}

/// One invalid field, by dotted path.
#[derive(Debug, Clone, PartialEq)]
pub struct FieldError {
    pub path: String,
    pub message: String,
}

impl fmt::Display for FieldError {
    fn fmt(&self, f: &mut fmt::Formatter<'_>) -> fmt::Result {
        write!(f, "{}: {}", self.path, self.message)
    }
}

#[derive(Debug, Error)]
pub enum ConfigError {
    #[error("cannot read {path}: {source}")]
    Read { path: PathBuf, source: std::io::Error },
    #[error("cannot parse configuration: {0}")]
    Parse(String),
    #[error("invalid configuration:\n  {}", .0.iter().map(|e| e.to_string()).collect::<Vec<_>>().join("\n  "))]
    Invalid(Vec<FieldError>),
}

impl ConfigError {
    /// Dotted paths of the offending fields; empty for read and parse errors.
    pub fn paths(&self) -> Vec<&str> {
        match self {
            ConfigError::Invalid(errs) => errs.iter().map(|e| e.path.as_str()).collect(),
            _ => Vec::new(),
        }
    }
}

impl ExperimentConfig {
    /// Parses without validating. Relative model paths are kept as written.
    pub fn from_toml_str(s: &str) -> Result<Self, ConfigError> {
        toml::from_str(s).map_err(|e| ConfigError::Parse(e.to_string()))
    }

    /// Reads, resolves a relative `model.path` against the file's directory,
    /// and validates.
    pub fn load(path: &Path) -> Result<Self, ConfigError> {
        let text = std::fs::read_to_string(path).map_err(|source| ConfigError::Read {
            path: path.to_owned(),
            source,
        })?;
        let mut config = Self::from_toml_str(&text)?;
        let base = path.parent().unwrap_or(Path::new("."));
        if let Some(p) = config.model.as_mut().and_then(|m| m.path.as_mut()) {
            if p.is_relative() {
                *p = base.join(&*p);
            }
        }
        config.validate()?;
        Ok(config)
    }

    pub fn to_toml_string(&self) -> String {
        toml::to_string(self).expect("configuration serializes")
    }

    /// SHA-256 of the re-serialized configuration, in hex.
    pub fn digest(&self) -> String {
        hex::encode(Sha256::digest(self.to_toml_string().as_bytes()))
    }

    pub fn lattice(&self) -> Option<LatticeConfig> {
        self.lattice.as_ref().map(LatticeSection::to_config)
    }

    pub fn tail_section(&self) -> TailSection {
        self.tail.clone().unwrap_or_default()
    }

    pub fn corridor_section(&self) -> CorridorSection {
        self.corridor.clone().unwrap_or_default()
    }

    pub fn spectral_section(&self) -> SpectralSection {
        self.spectral.clone().unwrap_or_default()
    }

    pub fn abstract_section(&self) -> AbstractSection {
        self.abstract_.clone().unwrap_or_default()
    }

    /// Loads the tower base named by the `[model]` section.
    pub fn model_base(&self) -> anyhow::Result<GibbsMarkovBase> {
        let model = self
            .model
            .as_ref()
            .ok_or_else(|| anyhow::anyhow!("mode {} needs a [model] section", self.run.mode))?;
        match (&model.builtin, &model.path) {
            (Some(name), None) => builtin_model(name).ok_or_else(|| anyhow::anyhow!("unknown built-in model {name:?}")),
            (None, Some(path)) => {
                let text = std::fs::read_to_string(path)
                    .map_err(|e| anyhow::anyhow!("cannot read model {}: {e}", path.display()))?;
                Ok(GibbsMarkovBase::from_json(&text)?)
            }
            _ => anyhow::bail!("[model] needs exactly one of builtin, path"),
        }
    }

    /// Checks every field, collecting all problems.
    pub fn validate(&self) -> Result<(), ConfigError> {
        let mut errs = Vec::new();
        let mut bad = |path: &str, message: String| {
            errs.push(FieldError {
                path: path.into(),
                message,
            })
        };
        let run = &self.run;
        if run.n_values.is_empty() {
            bad("run.n_values", "must be nonempty".into());
        }
        if run.n_values.contains(&0) {
            bad("run.n_values", "entries must be ≥ 1".into());
        }
        if run.workers == 0 {
            bad("run.workers", "must be ≥ 1".into());
        }
        if run.mode.needs_lattice() && run.samples == 0 {
            bad("run.samples", format!("mode {} needs samples ≥ 1", run.mode));
        }

        let b = &self.bounds;
        for (name, v) in [
            ("bounds.C", b.c),
            ("bounds.omega", b.omega),
            ("bounds.eps1", b.eps1),
            ("bounds.b", b.b),
        ] {
            if !(v > 0.0 && v.is_finite()) {
                bad(name, format!("{v} must be positive"));
            }
        }
        if !(b.delta > 0.0 && b.delta < 0.5) {
            bad("bounds.delta", format!("{} outside (0, 0.5)", b.delta));
        }

        match (&self.lattice, run.mode.needs_lattice()) {
            (None, true) => bad("lattice", format!("mode {} needs a [lattice] section", run.mode)),
            (Some(lattice), _) => {
                if let Err(vs) = validate_config(&lattice.to_config()) {
                    for v in vs {
                        bad(&format!("lattice.{}", v.field_path()), v.to_string());
                    }
                }
            }
            (None, false) => {}
        }

        if run.mode.needs_model() {
            match &self.model {
                None => bad("model", format!("mode {} needs a [model] section", run.mode)),
                Some(ModelSection {
                    builtin: Some(name),
                    path: None,
                }) => {
                    if builtin_model(name).is_none() {
                        bad("model.builtin", format!("unknown model {name:?}"));
                    }
                }
                Some(ModelSection {
                    builtin: None,
                    path: Some(p),
                }) => {
                    if !p.is_file() {
                        bad("model.path", format!("{} is not a file", p.display()));
                    }
                }
                Some(_) => bad("model", "give exactly one of builtin, path".into()),
            }
        }

        if let Some(tail) = &self.tail {
            let t = tail.thresholds();
            if t.is_empty() || t[0] < 1 || t.windows(2).any(|w| w[0] >= w[1]) {
                bad("tail.thresholds", "must be increasing and ≥ 1".into());
            }
            if tail.window.0 >= tail.window.1 {
                bad("tail.window", format!("{:?} is empty", tail.window));
            }
        }
        if let Some(c) = &self.corridor {
            if c.p_range.0 < 1 || c.p_range.0 > c.p_range.1 {
                bad("corridor.p_range", format!("{:?} is empty or starts at 0", c.p_range));
            }
            if c.r_range.0 > c.r_range.1 {
                bad("corridor.r_range", format!("{:?} is empty", c.r_range));
            }
            if !(c.c > 0.0) {
                bad("corridor.c", format!("{} must be positive", c.c));
            }
        }
        if let Some(s) = &self.spectral {
            if s.t_grid.is_empty() || s.t_grid.iter().any(|t| !(*t > 0.0 && *t < 1.0)) {
                bad("spectral.t_grid", "needs points in (0, 1)".into());
            }
            if s.h_grid.is_empty() || s.h_grid.iter().any(|h| !(*h > 0.0 && *h < 1.0)) {
                bad("spectral.h_grid", "needs points in (0, 1)".into());
            }
        }
        if let Some(a) = &self.abstract_ {
            for (name, f) in [
                ("abstract.ell1", Some(&a.ell1)),
                ("abstract.ell2", Some(&a.ell2)),
                ("abstract.ell3", a.ell3.as_ref()),
            ] {
                if let Some(Err(e)) = f.map(SlowlyVaryingFn::validate) {
                    bad(name, e.to_string());
                }
            }
            if a.grid.iter().any(|x| *x < 2.0) {
                bad("abstract.grid", "points must be ≥ 2".into());
            }
        }

        if errs.is_empty() {
            Ok(())
        } else {
            Err(ConfigError::Invalid(errs))
        }
    }
}

#[cfg(test)]
mod tests {
    use super::*;

    const TAIL: &str = r#"
output_dir = "out"

[lattice]
d = 2
[[lattice.disk]]
center = [0.0, 0.0]
radius = 0.25

[run]
mode = "tail"
n_values = [1]
samples = 1000
seed = 7
"#;

    #[test]
    fn parses_and_round_trips() {
        let c = ExperimentConfig::from_toml_str(TAIL).unwrap();
        c.validate().unwrap();
        assert_eq!(c.run.mode, Mode::Tail);
        assert_eq!(c.run.workers, 1);
        assert_eq!(c.bounds, BoundsSection::default());
        let back = ExperimentConfig::from_toml_str(&c.to_toml_string()).unwrap();
        assert_eq!(back, c);
        assert_eq!(back.digest(), c.digest());
    }

    #[test]
    fn bad_radius_names_the_field() {
        let text = TAIL.replace("radius = 0.25", "radius = 0.6");
        let err = ExperimentConfig::from_toml_str(&text).unwrap().validate().unwrap_err();
        assert!(err.paths().iter().any(|p| p.ends_with("disk[0].radius")), "{err}");
        assert!(err.to_string().contains("disk[0].radius"));
    }

    #[test]
    fn model_modes_need_a_model() {
        let text = TAIL.replace("mode = \"tail\"", "mode = \"renewal\"");
        let err = ExperimentConfig::from_toml_str(&text).unwrap().validate().unwrap_err();
        assert_eq!(err.paths(), vec!["model"]);
    }

    #[test]
    fn unknown_keys_are_rejected() {
        let text = TAIL.replace("seed = 7", "seed = 7\nsede = 8");
        assert!(matches!(
            ExperimentConfig::from_toml_str(&text),
            Err(ConfigError::Parse(_))
        ));
    }

    #[test]
    fn builtin_names() {
        assert!(builtin_model("bernoulli").is_some());
        assert_eq!(builtin_model("heavy-tailed-128").unwrap().alphabet_size, 256);
        assert!(builtin_model("heavy-tailed-x").is_none());
    }

    #[test]
    fn default_thresholds_are_increasing() {
        let t = TailSection::default().thresholds();
        assert_eq!(t.first(), Some(&1));
        assert_eq!(t.last(), Some(&1024));
        assert!(t.windows(2).all(|w| w[0] < w[1]));
    }
}
