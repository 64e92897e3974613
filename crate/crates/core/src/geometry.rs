//! Periodic disk configurations on the unit torus.
//!
//! A [`LatticeConfig`] lists the scatterers of the fundamental cell. Its
//! cover is the plane (`d = 2`) or the tube `ℝ × [0,1)` (`d = 1`); only the
//! unfolded axes contribute to lattice displacements.

use std::fmt;

use serde::{Deserialize, Serialize};
use sha2::{Digest, Sha256};

use crate::Cell;

/// Minimal clearance between disks, including periodic translates.
pub const SEPARATION_EPS: f64 = 1e-9;

/// Default cutoff on corridor directions.
pub const DEFAULT_MAX_DIRECTION_NORM: i64 = 4;

#[derive(Debug, Clone, Copy, PartialEq, Serialize, Deserialize)]
pub struct DiskScatterer {
    /// Center in cell coordinates, `[0,1)²`.
    pub center: [f64; 2],
    /// Radius in units of the cell side.
    pub radius: f64,
}

impl DiskScatterer {
    pub fn new(center: [f64; 2], radius: f64) -> Self {
        Self { center, radius }
    }
}

#[derive(Debug, Clone, PartialEq, Serialize, Deserialize)]
pub struct LatticeConfig {
    /// 1 for the tubular cover, 2 for the planar cover.
    pub dimension: usize,
    pub scatterers: Vec<DiskScatterer>,
}

#[derive(Serialize, Deserialize)]
struct LatticeSection {
    d: usize,
}

/// On-disk TOML layout: `[lattice] d = 2` followed by `[[disk]]` tables.
#[derive(Serialize, Deserialize)]
struct LatticeDocument {
    lattice: LatticeSection,
    #[serde(default)]
    disk: Vec<DiskScatterer>,
}

impl LatticeConfig {
    pub fn new(dimension: usize, scatterers: Vec<DiskScatterer>) -> Self {
        Self { dimension, scatterers }
    }

    /// One disk of radius `radius` centred in the cell.
    pub fn single_disk(radius: f64) -> Self {
        Self::new(2, vec![DiskScatterer::new([0.5, 0.5], radius)])
    }

    pub fn with_dimension(mut self, dimension: usize) -> Self {
        self.dimension = dimension;
        self
    }

    /// Axes of the plane that are unfolded in the cover.
    pub fn cover_axes(&self) -> &'static [usize] {
        if self.dimension == 1 {
            &[0]
        } else {
            &[0, 1]
        }
    }

    /// Total boundary length of the scatterers in one cell.
    pub fn total_arclength(&self) -> f64 {
        self.scatterers
            .iter()
            .map(|d| 2.0 * std::f64::consts::PI * d.radius)
            .sum()
    }

    /// Projects a full lattice vector onto the cover axes.
    pub fn project(&self, v: Cell) -> Cell {
        if self.dimension == 1 {
            [v[0], 0]
        } else {
            v
        }
    }

    pub fn from_toml_str(s: &str) -> Result<Self, toml::de::Error> {
        let doc: LatticeDocument = toml::from_str(s)?;
        Ok(Self::new(doc.lattice.d, doc.disk))
    }

    pub fn to_toml_string(&self) -> String {
        let doc = LatticeDocument {
            lattice: LatticeSection { d: self.dimension },
            disk: self.scatterers.clone(),
        };
        toml::to_string(&doc).expect("lattice document is always serializable")
    }

    /// Stable hex digest of the configuration, used to tag Monte Carlo output.
    pub fn digest(&self) -> String {
        let canonical = serde_json::to_vec(self).expect("config serializes");
        let hash = Sha256::digest(&canonical);
        hex::encode(&hash[..8])
    }
}

/// One violated configuration invariant.
#[derive(Debug, Clone, PartialEq)]
pub enum Violation {
    Dimension(usize),
    NoScatterers,
    Radius {
        disk: usize,
        radius: f64,
    },
    Center {
        disk: usize,
        center: [f64; 2],
    },
    Overlap {
        first: usize,
        second: usize,
        offset: [i64; 2],
        distance: f64,
        required: f64,
    },
}

impl Violation {
    /// Dotted path of the offending field, e.g. `disk[0].radius`.
    pub fn field_path(&self) -> String {
        match self {
            Violation::Dimension(_) => "lattice.d".into(),
            Violation::NoScatterers => "disk".into(),
            Violation::Radius { disk, .. } => format!("disk[{disk}].radius"),
            Violation::Center { disk, .. } => format!("disk[{disk}].center"),
            Violation::Overlap { first, second, .. } => format!("disk[{first}]/disk[{second}]"),
        }
    }
}

impl fmt::Display for Violation {
    fn fmt(&self, f: &mut fmt::Formatter<'_>) -> fmt::Result {
        match self {
            Violation::Dimension(d) => write!(f, "lattice.d = {d} is not 1 or 2"),
            Violation::NoScatterers => write!(f, "configuration has no disks"),
            Violation::Radius { disk, radius } => {
                write!(f, "disk[{disk}].radius = {radius} outside (0, 0.5)")
            }
            Violation::Center { disk, center } => {
                write!(f, "disk[{disk}].center = {center:?} outside [0,1)^2")
            }
            Violation::Overlap {
                first,
                second,
                offset,
                distance,
                required,
            } => write!(
                f,
                "disk[{first}] and disk[{second}] (translate {offset:?}) are {distance:.6} apart, need > {required:.6}"
            ),
        }
    }
}

/// Checks every configuration invariant, returning all violations found.
pub fn validate_config(config: &LatticeConfig) -> Result<(), Vec<Violation>> {
    let mut violations = Vec::new();
    if !(config.dimension == 1 || config.dimension == 2) {
        violations.push(Violation::Dimension(config.dimension));
    }
    if config.scatterers.is_empty() {
        violations.push(Violation::NoScatterers);
    }
    for (i, d) in config.scatterers.iter().enumerate() {
        if !(d.radius > 0.0 && d.radius < 0.5) || !d.radius.is_finite() {
            violations.push(Violation::Radius {
                disk: i,
                radius: d.radius,
            });
        }
        if !d.center.iter().all(|c| (0.0..1.0).contains(c)) {
            violations.push(Violation::Center {
                disk: i,
                center: d.center,
            });
        }
    }
    let disks = &config.scatterers;
    for i in 0..disks.len() {
        for j in i..disks.len() {
            for ox in -1..=1_i64 {
                for oy in -1..=1_i64 {
                    if i == j && ox == 0 && oy == 0 {
                        continue;
                    }
                    let dx = disks[j].center[0] + ox as f64 - disks[i].center[0];
                    let dy = disks[j].center[1] + oy as f64 - disks[i].center[1];
                    let distance = dx.hypot(dy);
                    let required = disks[i].radius + disks[j].radius + SEPARATION_EPS;
                    if distance <= required {
                        violations.push(Violation::Overlap {
                            first: i,
                            second: j,
                            offset: [ox, oy],
                            distance,
                            required,
                        });
                    }
                }
            }
        }
    }
    if violations.is_empty() {
        Ok(())
    } else {
        Err(violations)
    }
}

/// An infinite strip avoiding every periodic scatterer.
#[derive(Debug, Clone, Copy, PartialEq, Serialize, Deserialize)]
pub struct Corridor {
    /// Primitive direction, first nonzero component positive.
    pub direction: [i64; 2],
    pub width: f64,
    /// Position of the strip's midline along the unit normal
    /// `(-q, p)/|(p, q)|`, reduced modulo the line spacing.
    pub offset: f64,
}

impl Corridor {
    pub fn unit_direction(&self) -> [f64; 2] {
        let [p, q] = self.direction;
        let len = ((p * p + q * q) as f64).sqrt();
        [p as f64 / len, q as f64 / len]
    }

    pub fn unit_normal(&self) -> [f64; 2] {
        let [u, v] = self.unit_direction();
        [-v, u]
    }
}

fn gcd(a: i64, b: i64) -> i64 {
    let (mut a, mut b) = (a.abs(), b.abs());
    while b != 0 {
        let r = a % b;
        a = b;
        b = r;
    }
    a
}

/// Primitive integer directions `(p, q)` with `max(|p|,|q|) <= max_norm`,
/// normalized so the first nonzero component is positive.
pub fn primitive_directions(max_norm: i64) -> Vec<[i64; 2]> {
    let mut out = Vec::new();
    for p in 0..=max_norm {
        for q in -max_norm..=max_norm {
            if p == 0 && q <= 0 {
                continue;
            }
            if gcd(p, q) == 1 {
                out.push([p, q]);
            }
        }
    }
    out.sort_by_key(|&[p, q]| (p.abs().max(q.abs()), p * p + q * q, p, q));
    out
}

/// Uncovered arcs of a circle of length `period` after removing the
/// intervals `[c - r, c + r]`. Returns `(start, length)` pairs.
fn uncovered_gaps(period: f64, intervals: &[(f64, f64)]) -> Vec<(f64, f64)> {
    if intervals.iter().any(|&(_, r)| 2.0 * r >= period) {
        return Vec::new();
    }
    let mut segs: Vec<(f64, f64)> = intervals
        .iter()
        .map(|&(c, r)| {
            let start = (c - r).rem_euclid(period);
            (start, start + 2.0 * r)
        })
        .collect();
    segs.sort_by(|a, b| a.0.total_cmp(&b.0));
    // Merge on the unrolled line [s0, s0 + period).
    let origin = segs[0].0;
    let mut merged: Vec<(f64, f64)> = Vec::new();
    for (s, e) in segs {
        match merged.last_mut() {
            Some(last) if s <= last.1 => last.1 = last.1.max(e),
            _ => merged.push((s, e)),
        }
    }
    let mut gaps = Vec::new();
    for w in merged.windows(2) {
        let len = w[1].0 - w[0].1;
        if len > 0.0 {
            gaps.push((w[0].1, len));
        }
    }
    let last_end = merged.last().unwrap().1;
    let wrap = origin + period - last_end;
    if wrap > 0.0 {
        gaps.push((last_end.rem_euclid(period), wrap));
    }
    gaps
}

/// Every corridor whose primitive direction has max-norm at most
/// `max_direction_norm`, one entry per uncovered offset class.
pub fn detect_corridors(config: &LatticeConfig, max_direction_norm: i64) -> Vec<Corridor> {
    let mut corridors = Vec::new();
    for direction in primitive_directions(max_direction_norm) {
        let [p, q] = direction;
        let len = ((p * p + q * q) as f64).sqrt();
        let normal = [-(q as f64) / len, p as f64 / len];
        let spacing = 1.0 / len;
        let intervals: Vec<(f64, f64)> = config
            .scatterers
            .iter()
            .map(|d| (d.center[0] * normal[0] + d.center[1] * normal[1], d.radius))
            .collect();
        for (start, width) in uncovered_gaps(spacing, &intervals) {
            if width > 1e-12 {
                corridors.push(Corridor {
                    direction,
                    width,
                    offset: (start + 0.5 * width).rem_euclid(spacing),
                });
            }
        }
    }
    corridors
}

#[derive(Debug, Clone, Copy, PartialEq, Eq, Serialize, Deserialize)]
#[serde(rename_all = "lowercase")]
pub enum Horizon {
    Finite,
    Infinite,
}

/// Horizon classification, valid only up to the direction cutoff it carries.
#[derive(Debug, Clone, Copy, PartialEq, Serialize, Deserialize)]
pub struct HorizonVerdict {
    pub horizon: Horizon,
    pub max_direction_norm: i64,
    pub corridor_count: usize,
}

pub fn classify_horizon(config: &LatticeConfig, max_direction_norm: i64) -> HorizonVerdict {
    let corridor_count = detect_corridors(config, max_direction_norm).len();
    HorizonVerdict {
        horizon: if corridor_count > 0 {
            Horizon::Infinite
        } else {
            Horizon::Finite
        },
        max_direction_norm,
        corridor_count,
    }
}

/// Cover cell containing `point`: componentwise floor along the cover axes.
pub fn cell_of(point: [f64; 2], dimension: usize) -> Cell {
    let x = point[0].floor() as i64;
    if dimension == 1 {
        [x, 0]
    } else {
        [x, point[1].floor() as i64]
    }
}

#[cfg(test)]
mod tests {
    use super::*;

    #[test]
    fn single_disk_is_valid() {
        assert!(validate_config(&LatticeConfig::single_disk(0.25)).is_ok());
    }

    #[test]
    fn overlapping_disks_are_reported() {
        let cfg = LatticeConfig::new(
            2,
            vec![
                DiskScatterer::new([0.25, 0.25], 0.3),
                DiskScatterer::new([0.5, 0.5], 0.3),
            ],
        );
        let v = validate_config(&cfg).unwrap_err();
        assert!(v.iter().any(|v| matches!(
            v,
            Violation::Overlap { first: 0, second: 1, offset: [0, 0], distance, .. }
                if (distance - 0.125_f64.sqrt()).abs() < 1e-12
        )));
    }

    #[test]
    fn large_radius_is_reported() {
        let v = validate_config(&LatticeConfig::single_disk(0.6)).unwrap_err();
        assert!(v.contains(&Violation::Radius { disk: 0, radius: 0.6 }));
        assert_eq!(v[0].field_path(), "disk[0].radius");
    }

    #[test]
    fn axis_corridors_of_single_disk() {
        // Norm 1 also admits the two diagonals, which are open at r = 0.25.
        let cs = detect_corridors(&LatticeConfig::single_disk(0.25), 1);
        assert_eq!(cs.len(), 4);
        for dir in [[1, 0], [0, 1]] {
            let c = cs.iter().find(|c| c.direction == dir).unwrap();
            assert!((c.width - 0.5).abs() < 1e-12);
        }
    }

    #[test]
    fn extra_disk_leaves_horizon_infinite() {
        let mut cfg = LatticeConfig::single_disk(0.25);
        cfg.scatterers.push(DiskScatterer::new([0.0, 0.5], 0.2));
        assert!(validate_config(&cfg).is_ok());
        let cs = detect_corridors(&cfg, 1);
        // Its y-shadow [0.3, 0.7] lies inside the first disk's, so the
        // horizontal corridor keeps width 0.5; the vertical one splits.
        let h = cs.iter().find(|c| c.direction == [1, 0]).unwrap();
        assert!((h.width - 0.5).abs() < 1e-12);
        let v: Vec<f64> = cs.iter().filter(|c| c.direction == [0, 1]).map(|c| c.width).collect();
        assert_eq!(v.len(), 2);
        assert!(v.iter().all(|w| (w - 0.05).abs() < 1e-12));
        assert_eq!(classify_horizon(&cfg, 1).horizon, Horizon::Infinite);
    }

    #[test]
    fn diagonal_corridor_width() {
        let cs = detect_corridors(&LatticeConfig::single_disk(0.25), 2);
        let diag = cs.iter().find(|c| c.direction == [1, 1]).unwrap();
        assert!((diag.width - (0.5_f64.sqrt() - 0.5)).abs() < 1e-12);
    }

    #[test]
    fn nearly_touching_disk_keeps_only_axis_corridors() {
        let cs = detect_corridors(&LatticeConfig::single_disk(0.49), 2);
        assert_eq!(cs.len(), 2);
        assert!(cs.iter().all(|c| (c.width - 0.02).abs() < 1e-12));
    }

    #[test]
    fn finite_horizon_configuration() {
        let cfg = LatticeConfig::new(
            2,
            vec![DiskScatterer::new([0.0, 0.0], 0.4), DiskScatterer::new([0.5, 0.5], 0.3)],
        );
        assert!(validate_config(&cfg).is_ok());
        assert_eq!(classify_horizon(&cfg, 3).horizon, Horizon::Finite);
    }

    #[test]
    fn cell_of_floors() {
        assert_eq!(cell_of([1.3, 2.7], 2), [1, 2]);
        assert_eq!(cell_of([-0.2, 0.5], 2), [-1, 0]);
        assert_eq!(cell_of([3.9, 7.1], 1), [3, 0]);
    }

    #[test]
    fn toml_roundtrip() {
        let doc = "[lattice]\nd = 2\n\n[[disk]]\ncenter = [0.5, 0.5]\nradius = 0.25\n";
        let cfg = LatticeConfig::from_toml_str(doc).unwrap();
        assert_eq!(cfg, LatticeConfig::single_disk(0.25));
        assert_eq!(LatticeConfig::from_toml_str(&cfg.to_toml_string()).unwrap(), cfg);
    }

    #[test]
    fn primitive_directions_are_normalized() {
        let dirs = primitive_directions(2);
        assert_eq!(dirs.len(), 8);
        assert!(dirs.contains(&[0, 1]) && dirs.contains(&[1, -2]) && dirs.contains(&[2, -1]));
        assert!(!dirs.contains(&[2, 2]) && !dirs.contains(&[0, -1]));
    }
}
