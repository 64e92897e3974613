//! The billiard collision map on the periodic cover.
//!
//! A [`PhasePoint`] sits on one disk copy in the cover and carries an
//! outgoing direction. [`BilliardTable::next_collision`] walks grid cells
//! along the outgoing ray, intersects it exactly with each nearby disk copy,
//! and reflects specularly at the first hit.

use std::collections::{BTreeMap, BinaryHeap};
use std::f64::consts::{FRAC_PI_2, PI, TAU};
use std::io::Write;

use serde::{Deserialize, Serialize};
use thiserror::Error;

use crate::geometry::{cell_of, validate_config, LatticeConfig};
use crate::Cell;

/// Discriminant magnitude below which a hit counts as tangential.
pub const GRAZING_TOL: f64 = 1e-12;

/// Cells a single flight may cross before it is declared parallel to a
/// corridor.
pub const DEFAULT_MAX_CELLS: u64 = 100_000_000;

/// Euclidean norm of a lattice step. Used for `S_n` and `M_n`.
pub fn step_norm(k: Cell) -> f64 {
    ((k[0] * k[0] + k[1] * k[1]) as f64).sqrt()
}

#[derive(Debug, Error, Clone, PartialEq)]
pub enum DynamicsError {
    #[error("tangential hit, discriminant {discriminant:e}")]
    Grazing { discriminant: f64 },
    #[error("no collision after {cells} cells")]
    FlightOverflow { cells: u64 },
    #[error("invalid phase point: {0}")]
    InvalidPoint(String),
    #[error("invalid configuration: {0}")]
    InvalidConfig(String),
    #[error("step {step}: {source}")]
    AtStep {
        step: usize,
        #[source]
        source: Box<DynamicsError>,
    },
    #[error("quadrature budget of {evaluations} evaluations exhausted, worst error {worst_error:e}")]
    BudgetExceeded { evaluations: u64, worst_error: f64 },
}

impl DynamicsError {
    /// Strips step annotations.
    pub fn root(&self) -> &DynamicsError {
        match self {
            DynamicsError::AtStep { source, .. } => source.root(),
            e => e,
        }
    }
}

/// A collision state: a point on a disk copy of the cover with an outgoing
/// velocity at angle `phi` from the outward normal.
#[derive(Debug, Clone, Copy, PartialEq, Serialize, Deserialize)]
pub struct PhasePoint {
    pub disk_index: usize,
    /// Polar angle of the point on the disk, in `[0, 2π)`.
    pub boundary_angle: f64,
    /// Angle of the outgoing velocity from the outward normal.
    pub phi: f64,
    /// Lattice translate of the disk copy carrying the point.
    pub cell: Cell,
}

impl PhasePoint {
    pub fn new(disk_index: usize, boundary_angle: f64, phi: f64) -> Self {
        Self {
            disk_index,
            boundary_angle: boundary_angle.rem_euclid(TAU),
            phi,
            cell: [0, 0],
        }
    }
}

/// Time-reversal involution: `φ ↦ −φ` at fixed position.
pub fn reverse_point(x: &PhasePoint) -> PhasePoint {
    PhasePoint { phi: -x.phi, ..*x }
}

#[derive(Debug, Clone, Copy, PartialEq, Serialize, Deserialize)]
pub struct FlightResult {
    pub next: PhasePoint,
    /// Displacement projected onto the cover axes.
    pub kappa: Cell,
    pub flight_length: f64,
}

/// Birkhoff data of an orbit segment.
#[derive(Debug, Clone, Copy, PartialEq)]
pub struct OrbitSummary {
    pub kappa: Cell,
    /// `Σ |κ∘T^j|` over the segment.
    pub sum_norm: f64,
    /// `max |κ∘T^j|` over the segment.
    pub max_norm: f64,
    pub end: PhasePoint,
}

#[derive(Debug, Clone, Copy)]
struct CellEntry {
    disk: usize,
    offset: [i64; 2],
    center: [f64; 2],
    radius: f64,
}

/// Precomputed lookup for the collision map of one configuration.
#[derive(Debug, Clone)]
pub struct BilliardTable {
    config: LatticeConfig,
    /// Disk copies meeting the closed unit cell.
    entries: Vec<CellEntry>,
    /// Cumulative boundary length, one entry per disk plus a leading zero.
    arclength: Vec<f64>,
    max_cells: u64,
}

enum Hit {
    Miss,
    At(f64),
    Grazing(f64, f64),
}

#[inline]
fn ray_circle(p: [f64; 2], v: [f64; 2], c: [f64; 2], r: f64) -> Hit {
    let w = [p[0] - c[0], p[1] - c[1]];
    let b = -(w[0] * v[0] + w[1] * v[1]);
    if b <= 0.0 {
        return Hit::Miss;
    }
    let cross = w[0] * v[1] - w[1] * v[0];
    let disc = r * r - cross * cross;
    if disc < -GRAZING_TOL {
        return Hit::Miss;
    }
    if disc <= GRAZING_TOL {
        return Hit::Grazing(b, disc);
    }
    // Larger root b + √disc first, the near root from the product of roots.
    let far = b + disc.sqrt();
    let near = (w[0] * w[0] + w[1] * w[1] - r * r) / far;
    if near > 0.0 {
        Hit::At(near)
    } else {
        Hit::Miss
    }
}

impl BilliardTable {
    pub fn new(config: &LatticeConfig) -> Result<Self, DynamicsError> {
        validate_config(config).map_err(|v| {
            DynamicsError::InvalidConfig(v.iter().map(|v| v.to_string()).collect::<Vec<_>>().join("; "))
        })?;
        let mut entries = Vec::new();
        for (j, d) in config.scatterers.iter().enumerate() {
            for ox in -1..=1_i64 {
                for oy in -1..=1_i64 {
                    let c = [d.center[0] + ox as f64, d.center[1] + oy as f64];
                    let nx = c[0].clamp(0.0, 1.0);
                    let ny = c[1].clamp(0.0, 1.0);
                    if (c[0] - nx).hypot(c[1] - ny) <= d.radius {
                        entries.push(CellEntry {
                            disk: j,
                            offset: [ox, oy],
                            center: c,
                            radius: d.radius,
                        });
                    }
                }
            }
        }
        let mut arclength = vec![0.0];
        for d in &config.scatterers {
            let last = *arclength.last().unwrap();
            arclength.push(last + TAU * d.radius);
        }
        Ok(Self {
            config: config.clone(),
            entries,
            arclength,
            max_cells: DEFAULT_MAX_CELLS,
        })
    }

    pub fn with_max_cells(mut self, max_cells: u64) -> Self {
        self.max_cells = max_cells;
        self
    }

    pub fn config(&self) -> &LatticeConfig {
        &self.config
    }

    pub fn dimension(&self) -> usize {
        self.config.dimension
    }

    /// Total boundary length `|∂Q|` of one cell.
    pub fn total_arclength(&self) -> f64 {
        *self.arclength.last().unwrap()
    }

    /// Phase point at arclength `s ∈ [0, |∂Q|)` with `sin φ = u`.
    pub fn point_at(&self, s: f64, u: f64) -> PhasePoint {
        let j = match self.arclength[1..].iter().position(|&a| s < a) {
            Some(j) => j,
            None => self.config.scatterers.len() - 1,
        };
        let r = self.config.scatterers[j].radius;
        PhasePoint::new(j, (s - self.arclength[j]) / r, u.clamp(-1.0, 1.0).asin())
    }

    /// Position of `x` in the cover.
    pub fn position(&self, x: &PhasePoint) -> [f64; 2] {
        let l = self.local_position(x);
        [x.cell[0] as f64 + l[0], x.cell[1] as f64 + l[1]]
    }

    /// Position relative to the lattice translate `x.cell`.
    fn local_position(&self, x: &PhasePoint) -> [f64; 2] {
        let d = &self.config.scatterers[x.disk_index];
        let (s, c) = x.boundary_angle.sin_cos();
        [d.center[0] + d.radius * c, d.center[1] + d.radius * s]
    }

    pub fn check_point(&self, x: &PhasePoint) -> Result<(), DynamicsError> {
        if x.disk_index >= self.config.scatterers.len() {
            return Err(DynamicsError::InvalidPoint(format!(
                "disk_index {} out of range",
                x.disk_index
            )));
        }
        if !(x.boundary_angle.is_finite() && (0.0..TAU).contains(&x.boundary_angle)) {
            return Err(DynamicsError::InvalidPoint(format!(
                "boundary_angle {} outside [0, 2π)",
                x.boundary_angle
            )));
        }
        if !(x.phi.is_finite() && x.phi > -FRAC_PI_2 && x.phi < FRAC_PI_2) {
            return Err(DynamicsError::InvalidPoint(format!(
                "phi {} outside (-π/2, π/2)",
                x.phi
            )));
        }
        Ok(())
    }

    /// One application of the collision map.
    pub fn next_collision(&self, x: &PhasePoint) -> Result<FlightResult, DynamicsError> {
        self.check_point(x)?;
        Ok(self.flight(x, self.local_position(x))?.0)
    }

    /// Collision map from `x`, whose position relative to `x.cell` is `p`.
    /// Also returns the landing position relative to the new cell, which is
    /// exactly `local_position` of the image.
    fn flight(&self, x: &PhasePoint, p: [f64; 2]) -> Result<(FlightResult, [f64; 2]), DynamicsError> {
        let dir = x.boundary_angle + x.phi;
        let (vy, vx) = dir.sin_cos();
        let v = [vx, vy];

        let mut g = [p[0].floor() as i64, p[1].floor() as i64];
        let start_cell = g;
        let step = [if vx > 0.0 { 1 } else { -1 }, if vy > 0.0 { 1 } else { -1 }];
        let boundary = |gi: i64, pi: f64, vi: f64| {
            if vi > 0.0 {
                ((gi + 1) as f64 - pi) / vi
            } else if vi < 0.0 {
                (gi as f64 - pi) / vi
            } else {
                f64::INFINITY
            }
        };
        let mut t_max = [boundary(g[0], p[0], vx), boundary(g[1], p[1], vy)];
        let t_delta = [
            if vx != 0.0 { 1.0 / vx.abs() } else { f64::INFINITY },
            if vy != 0.0 { 1.0 / vy.abs() } else { f64::INFINITY },
        ];

        let mut best: Option<(f64, usize, [i64; 2], Option<f64>)> = None;
        let mut cells = 0_u64;
        loop {
            // Ray origin expressed relative to cell g keeps coordinates small.
            let q = [p[0] - g[0] as f64, p[1] - g[1] as f64];
            for e in &self.entries {
                let translate = [g[0] + e.offset[0], g[1] + e.offset[1]];
                if e.disk == x.disk_index && translate == [0, 0] {
                    continue;
                }
                let (s, graze) = match ray_circle(q, v, e.center, e.radius) {
                    Hit::Miss => continue,
                    Hit::At(s) => (s, None),
                    Hit::Grazing(s, disc) => (s, Some(disc)),
                };
                if best.is_none_or(|b| s < b.0) {
                    best = Some((s, e.disk, translate, graze));
                }
            }
            let t_exit = t_max[0].min(t_max[1]);
            if let Some((s, _, _, _)) = best {
                if s <= t_exit {
                    break;
                }
            }
            cells += 1;
            if cells > self.max_cells {
                return Err(DynamicsError::FlightOverflow { cells });
            }
            if t_max[0] < t_max[1] {
                g[0] += step[0];
                t_max[0] += t_delta[0];
            } else {
                g[1] += step[1];
                t_max[1] += t_delta[1];
            }
        }
        let (s, disk, translate, graze) = best.expect("loop exits with a hit");
        if let Some(discriminant) = graze {
            return Err(DynamicsError::Grazing { discriminant });
        }

        let d = &self.config.scatterers[disk];
        let hit = [p[0] + s * vx, p[1] + s * vy];
        let c = [d.center[0] + translate[0] as f64, d.center[1] + translate[1] as f64];
        let n = [(hit[0] - c[0]) / d.radius, (hit[1] - c[1]) / d.radius];
        let theta = n[1].atan2(n[0]).rem_euclid(TAU);
        let vn = vx * n[0] + vy * n[1];
        let out = [vx - 2.0 * vn * n[0], vy - 2.0 * vn * n[1]];
        let phi = (n[0] * out[1] - n[1] * out[0]).atan2(n[0] * out[0] + n[1] * out[1]);

        let next = PhasePoint {
            disk_index: disk,
            boundary_angle: theta,
            phi,
            cell: [x.cell[0] + translate[0], x.cell[1] + translate[1]],
        };
        // κ from the same boundary parametrization the next step starts from,
        // so Birkhoff sums telescope exactly.
        let landing = self.local_position(&next);
        let land_cell = cell_of([landing[0] + translate[0] as f64, landing[1] + translate[1] as f64], 2);
        let from_cell = cell_of(p, 2);
        debug_assert!(start_cell == from_cell);
        let kappa = self
            .config
            .project([land_cell[0] - from_cell[0], land_cell[1] - from_cell[1]]);
        Ok((
            FlightResult {
                next,
                kappa,
                flight_length: s,
            },
            landing,
        ))
    }

    /// Lattice displacement `κ_n` with `S_n` and `M_n` after `n` collisions.
    pub fn orbit_displacement(&self, x: &PhasePoint, n: usize) -> Result<OrbitSummary, DynamicsError> {
        let mut summary = OrbitSummary {
            kappa: [0, 0],
            sum_norm: 0.0,
            max_norm: 0.0,
            end: *x,
        };
        let mut orbit = Trajectory::new(self, *x);
        for step in 0..n {
            let f = orbit.advance().map_err(|e| DynamicsError::AtStep {
                step,
                source: Box::new(e),
            })?;
            let norm = step_norm(f.kappa);
            summary.kappa[0] += f.kappa[0];
            summary.kappa[1] += f.kappa[1];
            summary.sum_norm += norm;
            summary.max_norm = summary.max_norm.max(norm);
            summary.end = f.next;
        }
        Ok(summary)
    }

    /// Writes `n` steps of an orbit as CSV rows.
    pub fn write_trajectory_csv<W: Write>(&self, x: &PhasePoint, n: usize, out: W) -> Result<(), crate::Error> {
        let mut w = csv::Writer::from_writer(out);
        w.write_record([
            "step",
            "disk_index",
            "boundary_angle",
            "phi",
            "cell_x",
            "cell_y",
            "kappa_x",
            "kappa_y",
            "flight_length",
        ])?;
        let mut cur = *x;
        for step in 0..n {
            let f = self.next_collision(&cur).map_err(|e| DynamicsError::AtStep {
                step,
                source: Box::new(e),
            })?;
            w.write_record(&[
                step.to_string(),
                cur.disk_index.to_string(),
                format!("{:.17e}", cur.boundary_angle),
                format!("{:.17e}", cur.phi),
                cur.cell[0].to_string(),
                cur.cell[1].to_string(),
                f.kappa[0].to_string(),
                f.kappa[1].to_string(),
                format!("{:.17e}", f.flight_length),
            ])?;
            cur = f.next;
        }
        w.flush()?;
        Ok(())
    }

    /// `κ₁` at arclength `s` and `sin φ = u`, `None` on a degenerate flight.
    fn step_kappa(&self, s: f64, u: f64) -> Option<Cell> {
        self.next_collision(&self.point_at(s, u)).ok().map(|f| f.kappa)
    }
}

/// Successive collisions of one orbit. Bit-identical to iterating
/// [`BilliardTable::next_collision`], but reuses each landing position as the
/// next starting position instead of recomputing it.
#[derive(Debug, Clone)]
pub struct Trajectory<'a> {
    table: &'a BilliardTable,
    point: PhasePoint,
    local: Option<[f64; 2]>,
}

impl<'a> Trajectory<'a> {
    pub fn new(table: &'a BilliardTable, start: PhasePoint) -> Self {
        Self {
            table,
            point: start,
            local: None,
        }
    }

    pub fn point(&self) -> &PhasePoint {
        &self.point
    }

    /// Applies the collision map once; on error the orbit stays put.
    pub fn advance(&mut self) -> Result<FlightResult, DynamicsError> {
        self.table.check_point(&self.point)?;
        let p = self.local.unwrap_or_else(|| self.table.local_position(&self.point));
        let (f, landing) = self.table.flight(&self.point, p)?;
        self.point = f.next;
        self.local = Some(landing);
        Ok(f)
    }
}

/// Convenience wrapper building a [`BilliardTable`] for a single call.
pub fn next_collision(config: &LatticeConfig, x: &PhasePoint) -> Result<FlightResult, DynamicsError> {
    BilliardTable::new(config)?.next_collision(x)
}

/// Settings for [`exact_step_law`].
#[derive(Debug, Clone, Copy)]
pub struct StepLawOptions {
    /// Target error per requested `N`.
    pub tol: f64,
    /// Initial grid resolution along arclength and along `sin φ`.
    pub initial_grid: usize,
    /// Maximal number of flight evaluations.
    pub budget: u64,
}

impl Default for StepLawOptions {
    fn default() -> Self {
        Self {
            tol: 1e-4,
            initial_grid: 96,
            budget: 20_000_000,
        }
    }
}

/// Quadrature estimate of the one-step law on a set of targets.
#[derive(Debug, Clone, PartialEq)]
pub struct StepLaw {
    /// Estimated `μ(κ₁ = N)` per target.
    pub mass: BTreeMap<Cell, f64>,
    /// Error bound per target: mass of unresolved cells where `N` was seen.
    pub error: BTreeMap<Cell, f64>,
    /// Mass attributed to values outside the target set.
    pub other_mass: f64,
    /// Mass of mixed cells, split by sample fractions in `mass`/`other_mass`.
    pub unresolved_mass: f64,
    pub evaluations: u64,
}

const SUB: usize = 3;

struct Rect {
    s0: f64,
    u0: f64,
    ds: f64,
    du: f64,
    samples: [Option<Cell>; SUB * SUB],
}

impl Rect {
    fn uniform(&self) -> Option<Cell> {
        let first = self.samples[0]?;
        self.samples.iter().all(|s| *s == Some(first)).then_some(first)
    }
}

struct Queued {
    mass: f64,
    rect: Rect,
}

impl PartialEq for Queued {
    fn eq(&self, o: &Self) -> bool {
        self.mass == o.mass
    }
}
impl Eq for Queued {}
impl PartialOrd for Queued {
    fn partial_cmp(&self, o: &Self) -> Option<std::cmp::Ordering> {
        Some(self.cmp(o))
    }
}
impl Ord for Queued {
    fn cmp(&self, o: &Self) -> std::cmp::Ordering {
        self.mass.total_cmp(&o.mass)
    }
}

/// Adaptive quadrature of `μ(κ₁ = N)` for the targets `N`.
///
/// In the coordinates (arclength, `sin φ`) the Liouville measure is uniform
/// with density `1/(2|∂Q|)`. Rectangles whose 3×3 interior samples agree are
/// accepted whole; mixed rectangles touching a target are refined, largest
/// first, until every target's error bound is below `tol`.
pub fn exact_step_law(table: &BilliardTable, targets: &[Cell], opts: StepLawOptions) -> Result<StepLaw, DynamicsError> {
    let total = table.total_arclength();
    let density = 1.0 / (2.0 * total);
    let targets: Vec<Cell> = targets.iter().map(|&t| table.config().project(t)).collect();
    let is_target = |k: &Option<Cell>| k.is_some_and(|k| targets.contains(&k));

    let mut evaluations = 0_u64;
    let eval_rect = |s0: f64, u0: f64, ds: f64, du: f64, evaluations: &mut u64| {
        let mut samples = [None; SUB * SUB];
        for i in 0..SUB {
            for j in 0..SUB {
                let s = s0 + ds * (i as f64 + 0.5) / SUB as f64;
                let u = u0 + du * (j as f64 + 0.5) / SUB as f64;
                samples[i * SUB + j] = table.step_kappa(s, u);
            }
        }
        *evaluations += (SUB * SUB) as u64;
        Rect {
            s0,
            u0,
            ds,
            du,
            samples,
        }
    };

    let mut mass: BTreeMap<Cell, f64> = targets.iter().map(|&t| (t, 0.0)).collect();
    let mut other_mass = 0.0;
    let mut unresolved_mass = 0.0;
    let mut queue = BinaryHeap::new();
    let mut error: BTreeMap<Cell, f64> = targets.iter().map(|&t| (t, 0.0)).collect();

    let settle = |rect: &Rect, m: f64, mass: &mut BTreeMap<Cell, f64>, other: &mut f64, unresolved: &mut f64| {
        if let Some(k) = rect.uniform() {
            match mass.get_mut(&k) {
                Some(v) => *v += m,
                None => *other += m,
            }
            return;
        }
        *unresolved += m;
        let w = m / (SUB * SUB) as f64;
        for k in rect.samples.iter() {
            match k.and_then(|k| mass.get_mut(&k)) {
                Some(v) => *v += w,
                None => *other += w,
            }
        }
    };

    let g = opts.initial_grid.max(1);
    let (ds, du) = (total / g as f64, 2.0 / g as f64);
    for i in 0..g {
        for j in 0..g {
            let rect = eval_rect(i as f64 * ds, -1.0 + j as f64 * du, ds, du, &mut evaluations);
            let m = ds * du * density;
            if rect.uniform().is_none() && rect.samples.iter().any(&is_target) {
                for k in distinct_targets(&rect, &targets) {
                    *error.get_mut(&k).unwrap() += m;
                }
                queue.push(Queued { mass: m, rect });
            } else {
                settle(&rect, m, &mut mass, &mut other_mass, &mut unresolved_mass);
            }
        }
    }

    let worst = |error: &BTreeMap<Cell, f64>| error.values().cloned().fold(0.0, f64::max);
    while worst(&error) > opts.tol {
        if evaluations >= opts.budget {
            return Err(DynamicsError::BudgetExceeded {
                evaluations,
                worst_error: worst(&error),
            });
        }
        let Some(Queued { mass: m, rect }) = queue.pop() else {
            break;
        };
        for k in distinct_targets(&rect, &targets) {
            *error.get_mut(&k).unwrap() -= m;
        }
        let (hs, hu) = (rect.ds / 2.0, rect.du / 2.0);
        for (a, b) in [(0.0, 0.0), (1.0, 0.0), (0.0, 1.0), (1.0, 1.0)] {
            let child = eval_rect(rect.s0 + a * hs, rect.u0 + b * hu, hs, hu, &mut evaluations);
            let cm = m / 4.0;
            if child.uniform().is_none() && child.samples.iter().any(&is_target) {
                for k in distinct_targets(&child, &targets) {
                    *error.get_mut(&k).unwrap() += cm;
                }
                queue.push(Queued { mass: cm, rect: child });
            } else {
                settle(&child, cm, &mut mass, &mut other_mass, &mut unresolved_mass);
            }
        }
    }
    for Queued { mass: m, rect } in queue.drain() {
        settle(&rect, m, &mut mass, &mut other_mass, &mut unresolved_mass);
    }
    for v in error.values_mut() {
        *v = v.max(0.0);
    }
    Ok(StepLaw {
        mass,
        error,
        other_mass,
        unresolved_mass,
        evaluations,
    })
}

fn distinct_targets(rect: &Rect, targets: &[Cell]) -> Vec<Cell> {
    let mut out: Vec<Cell> = rect
        .samples
        .iter()
        .flatten()
        .filter(|k| targets.contains(k))
        .copied()
        .collect();
    out.sort_unstable();
    out.dedup();
    out
}

/// Angle difference folded into `(-π, π]`.
pub fn angle_distance(a: f64, b: f64) -> f64 {
    let d = (a - b).rem_euclid(TAU);
    if d > PI {
        TAU - d
    } else {
        d
    }
}

#[cfg(test)]
mod tests {
    use super::*;
    use crate::geometry::DiskScatterer;

    fn single() -> BilliardTable {
        BilliardTable::new(&LatticeConfig::single_disk(0.25)).unwrap()
    }

    #[test]
    fn north_pole_flies_up() {
        let t = single();
        let f = t.next_collision(&PhasePoint::new(0, FRAC_PI_2, 0.0)).unwrap();
        assert_eq!(f.kappa, [0, 1]);
        assert!((f.flight_length - 0.5).abs() < 1e-12);
        assert!(angle_distance(f.next.boundary_angle, 3.0 * FRAC_PI_2) < 1e-12);
        assert_eq!(f.next.cell, [0, 1]);
        assert!(f.next.phi.abs() < 1e-12);
    }

    #[test]
    fn east_pole_flies_right() {
        let f = single().next_collision(&PhasePoint::new(0, 0.0, 0.0)).unwrap();
        assert_eq!(f.kappa, [1, 0]);
        assert!((f.flight_length - 0.5).abs() < 1e-12);
    }

    #[test]
    fn one_dimensional_projection() {
        let cfg = LatticeConfig::single_disk(0.25).with_dimension(1);
        let t = BilliardTable::new(&cfg).unwrap();
        let f = t.next_collision(&PhasePoint::new(0, FRAC_PI_2, 0.0)).unwrap();
        assert_eq!(f.kappa, [0, 0]);
    }

    #[test]
    fn reverse_is_involution() {
        let x = PhasePoint::new(0, 1.0, 0.4);
        assert_eq!(reverse_point(&x).phi, -0.4);
        assert_eq!(reverse_point(&reverse_point(&x)), x);
        let z = PhasePoint::new(0, 1.0, 0.0);
        assert_eq!(reverse_point(&z), z);
    }

    #[test]
    fn time_reversal_round_trip() {
        let t = single();
        let x = PhasePoint::new(0, 0.3, 0.7);
        let y = t.next_collision(&reverse_point(&x)).unwrap().next;
        let back = t.next_collision(&reverse_point(&y)).unwrap().next;
        assert_eq!(back.cell, x.cell);
        assert!(angle_distance(back.boundary_angle, x.boundary_angle) < 1e-9);
        assert!((back.phi - x.phi).abs() < 1e-9);
    }

    #[test]
    fn invalid_points_are_rejected() {
        let t = single();
        assert!(matches!(
            t.next_collision(&PhasePoint::new(3, 0.0, 0.0)),
            Err(DynamicsError::InvalidPoint(_))
        ));
        let mut p = PhasePoint::new(0, 0.0, FRAC_PI_2);
        assert!(t.next_collision(&p).is_err());
        p.phi = 0.0;
        p.boundary_angle = 7.0;
        assert!(t.next_collision(&p).is_err());
    }

    #[test]
    fn corridor_direction_overflows() {
        // Nearly horizontal from the north pole: about 500 cells before the
        // next row of disks is reached.
        let t = single().with_max_cells(100);
        let x = PhasePoint::new(0, FRAC_PI_2, -FRAC_PI_2 + 1e-3);
        let err = t.next_collision(&x).unwrap_err();
        assert!(matches!(err, DynamicsError::FlightOverflow { .. }));
        let f = single().next_collision(&x).unwrap();
        assert_eq!(f.kappa[1], 1);
        assert!(f.kappa[0] > 400);
    }

    #[test]
    fn trajectory_matches_repeated_maps_bit_for_bit() {
        let two = DiskScatterer::new([0.0, 0.0], 0.3);
        let cfg = LatticeConfig::new(2, vec![DiskScatterer::new([0.5, 0.5], 0.2), two]);
        for t in [single(), BilliardTable::new(&cfg).unwrap()] {
            let start = PhasePoint::new(0, 0.3, 0.7);
            let mut orbit = Trajectory::new(&t, start);
            let mut x = start;
            for _ in 0..2000 {
                let a = t.next_collision(&x).unwrap();
                let b = orbit.advance().unwrap();
                assert_eq!(a, b);
                x = a.next;
            }
            assert_eq!(*orbit.point(), x);
        }
    }

    #[test]
    fn orbit_of_zero_length() {
        let s = single().orbit_displacement(&PhasePoint::new(0, 0.3, 0.7), 0).unwrap();
        assert_eq!(s.kappa, [0, 0]);
        assert_eq!(s.sum_norm, 0.0);
        assert_eq!(s.max_norm, 0.0);
    }

    #[test]
    fn errors_carry_step() {
        let t = single().with_max_cells(10);
        let err = t
            .orbit_displacement(&PhasePoint::new(0, FRAC_PI_2, -FRAC_PI_2 + 1e-3), 3)
            .unwrap_err();
        assert!(matches!(err, DynamicsError::AtStep { step: 0, .. }));
        assert!(matches!(err.root(), DynamicsError::FlightOverflow { .. }));
    }

    #[test]
    fn step_law_is_square_symmetric() {
        let t = single();
        let targets = [[1, 0], [0, 1], [-1, 0], [0, -1]];
        let law = exact_step_law(
            &t,
            &targets,
            StepLawOptions {
                tol: 2e-4,
                ..Default::default()
            },
        )
        .unwrap();
        let m: Vec<f64> = targets.iter().map(|k| law.mass[k]).collect();
        for v in &m {
            assert!((v - m[0]).abs() < 4e-4, "{m:?}");
        }
        let total: f64 = law.mass.values().sum::<f64>() + law.other_mass;
        assert!((total - 1.0).abs() < 1e-9);
    }

    #[test]
    fn trajectory_csv_has_header_and_rows() {
        let mut buf = Vec::new();
        single()
            .write_trajectory_csv(&PhasePoint::new(0, 0.3, 0.7), 5, &mut buf)
            .unwrap();
        let text = String::from_utf8(buf).unwrap();
        let lines: Vec<_> = text.lines().collect();
        assert_eq!(lines.len(), 6);
        assert!(lines[0].starts_with("step,disk_index,boundary_angle,phi"));
    }
}
