//! Brute-force oracles for corridor detection and the collision map.

use std::f64::consts::{FRAC_PI_2, PI, TAU};

use lorentz_core::dynamics::{angle_distance, reverse_point, BilliardTable, PhasePoint};
use lorentz_core::geometry::{
    cell_of, classify_horizon, detect_corridors, primitive_directions, DiskScatterer, Horizon, LatticeConfig,
};
use proptest::prelude::*;

fn two_disk_config() -> LatticeConfig {
    LatticeConfig::new(
        2,
        vec![
            DiskScatterer::new([0.2, 0.3], 0.15),
            DiskScatterer::new([0.7, 0.6], 0.2),
        ],
    )
}

/// Whether the infinite line `o + s·(p, q)` misses every disk copy.
///
/// The line is invariant under the translation by `(p, q)`, so it suffices to
/// test the copies met by one period of it.
fn line_is_free(config: &LatticeConfig, o: [f64; 2], dir: [i64; 2]) -> bool {
    let len = ((dir[0] * dir[0] + dir[1] * dir[1]) as f64).sqrt();
    let u = [dir[0] as f64 / len, dir[1] as f64 / len];
    let reach = dir[0].abs().max(dir[1].abs()) + 3;
    for kx in -reach..=reach {
        for ky in -reach..=reach {
            for d in &config.scatterers {
                let c = [d.center[0] + kx as f64 - o[0], d.center[1] + ky as f64 - o[1]];
                let dist = (c[0] * u[1] - c[1] * u[0]).abs();
                if dist <= d.radius {
                    return false;
                }
            }
        }
    }
    true
}

/// Free fraction of a fine grid of parallel lines within one spacing.
fn free_fraction(config: &LatticeConfig, dir: [i64; 2], samples: usize) -> f64 {
    let len = ((dir[0] * dir[0] + dir[1] * dir[1]) as f64).sqrt();
    let normal = [-(dir[1] as f64) / len, dir[0] as f64 / len];
    let spacing = 1.0 / len;
    let free = (0..samples)
        .filter(|&i| {
            let s = (i as f64 + 0.5) / samples as f64 * spacing;
            line_is_free(config, [s * normal[0], s * normal[1]], dir)
        })
        .count();
    free as f64 / samples as f64
}

#[test]
fn corridor_widths_match_ray_casting() {
    let configs = [LatticeConfig::single_disk(0.25), two_disk_config()];
    for config in &configs {
        let corridors = detect_corridors(config, 3);
        for dir in primitive_directions(3) {
            let len = ((dir[0] * dir[0] + dir[1] * dir[1]) as f64).sqrt();
            let detected: f64 = corridors
                .iter()
                .filter(|c| c.direction == dir)
                .map(|c| c.width)
                .sum::<f64>()
                * len;
            let samples = 4000;
            let cast = free_fraction(config, dir, samples);
            assert!(
                (cast - detected).abs() <= 4.0 / samples as f64,
                "{dir:?}: ray casting {cast}, detected {detected}"
            );
        }
    }
}

#[test]
fn corridor_midlines_are_free() {
    for config in [LatticeConfig::single_disk(0.3), two_disk_config()] {
        for c in detect_corridors(&config, 4) {
            let n = c.unit_normal();
            let o = [c.offset * n[0], c.offset * n[1]];
            assert!(line_is_free(&config, o, c.direction), "{c:?}");
            let edge = 0.5 * c.width + 1e-6;
            for side in [-1.0, 1.0] {
                let o = [o[0] + side * edge * n[0], o[1] + side * edge * n[1]];
                assert!(!line_is_free(&config, o, c.direction), "edge of {c:?}");
            }
        }
    }
}

#[test]
fn blocked_configuration_has_finite_horizon() {
    let config = LatticeConfig::new(
        2,
        vec![DiskScatterer::new([0.0, 0.0], 0.4), DiskScatterer::new([0.5, 0.5], 0.3)],
    );
    let verdict = classify_horizon(&config, 6);
    assert_eq!(verdict.horizon, Horizon::Finite);
    for dir in primitive_directions(6) {
        assert_eq!(free_fraction(&config, dir, 500), 0.0, "{dir:?}");
    }
}

/// Exhaustive search over every disk copy in a box around the start.
struct Naive {
    flight_length: f64,
    disk: usize,
    cell: [i64; 2],
}

fn naive_next(config: &LatticeConfig, table: &BilliardTable, x: &PhasePoint, reach: i64) -> Option<Naive> {
    let p = table.position(x);
    let dir = x.boundary_angle + x.phi;
    let v = [dir.cos(), dir.sin()];
    let mut best: Option<Naive> = None;
    for kx in x.cell[0] - reach..=x.cell[0] + reach {
        for ky in x.cell[1] - reach..=x.cell[1] + reach {
            for (j, d) in config.scatterers.iter().enumerate() {
                if j == x.disk_index && [kx, ky] == x.cell {
                    continue;
                }
                let w = [p[0] - d.center[0] - kx as f64, p[1] - d.center[1] - ky as f64];
                let b = -(w[0] * v[0] + w[1] * v[1]);
                let disc = b * b - (w[0] * w[0] + w[1] * w[1] - d.radius * d.radius);
                if disc <= 0.0 {
                    continue;
                }
                let s = b - disc.sqrt();
                if s > 0.0 && best.as_ref().is_none_or(|n| s < n.flight_length) {
                    best = Some(Naive {
                        flight_length: s,
                        disk: j,
                        cell: [kx, ky],
                    });
                }
            }
        }
    }
    best.filter(|n| n.flight_length < reach as f64 - 2.0)
}

fn grid_points(table: &BilliardTable, ns: usize, nu: usize) -> Vec<PhasePoint> {
    let total = table.total_arclength();
    let mut out = Vec::new();
    for i in 0..ns {
        for j in 0..nu {
            let s = (i as f64 + 0.37) / ns as f64 * total;
            let u = -0.999 + 1.998 * (j as f64 + 0.61) / nu as f64;
            out.push(table.point_at(s, u));
        }
    }
    out
}

#[test]
fn grid_traversal_matches_exhaustive_search() {
    for config in [LatticeConfig::single_disk(0.25), two_disk_config()] {
        let table = BilliardTable::new(&config).unwrap();
        let mut compared = 0;
        for x in grid_points(&table, 60, 40) {
            let Some(naive) = naive_next(&config, &table, &x, 40) else {
                continue;
            };
            let f = table.next_collision(&x).unwrap();
            assert_eq!(f.next.disk_index, naive.disk);
            assert_eq!(f.next.cell, naive.cell);
            assert!(
                (f.flight_length - naive.flight_length).abs() < 1e-9,
                "{} vs {}",
                f.flight_length,
                naive.flight_length
            );
            compared += 1;
        }
        assert!(compared > 2000, "only {compared} flights compared");
    }
}

fn landing_error(table: &BilliardTable, x: &PhasePoint) -> f64 {
    let f = table.next_collision(x).unwrap();
    let p = table.position(x);
    let dir = x.boundary_angle + x.phi;
    let hit = [p[0] + f.flight_length * dir.cos(), p[1] + f.flight_length * dir.sin()];
    let q = table.position(&f.next);
    let d = &table.config().scatterers[f.next.disk_index];
    let c = [d.center[0] + f.next.cell[0] as f64, d.center[1] + f.next.cell[1] as f64];
    let on_circle = ((q[0] - c[0]).hypot(q[1] - c[1]) - d.radius).abs();
    on_circle.max((hit[0] - q[0]).hypot(hit[1] - q[1]))
}

fn phase_point_strategy(disks: usize) -> impl Strategy<Value = PhasePoint> {
    (0..disks, 0.0..TAU, -1.55..1.55).prop_map(|(j, a, phi)| PhasePoint::new(j, a, phi))
}

proptest! {
    #![proptest_config(ProptestConfig::with_cases(400))]

    #[test]
    fn cell_of_commutes_with_translation(
        x in -50.0..50.0f64,
        y in -50.0..50.0f64,
        kx in -1000i64..1000,
        ky in -1000i64..1000,
    ) {
        let base = cell_of([x, y], 2);
        let moved = cell_of([x + kx as f64, y + ky as f64], 2);
        prop_assert_eq!(moved, [base[0] + kx, base[1] + ky]);
        prop_assert_eq!(cell_of([x + kx as f64, y], 1), [base[0] + kx, 0]);
    }

    #[test]
    fn landing_is_on_the_scatterer(x in phase_point_strategy(2)) {
        let table = BilliardTable::new(&two_disk_config()).unwrap();
        prop_assert!(landing_error(&table, &x) < 1e-9);
    }

    #[test]
    fn time_reversal_round_trip(x in phase_point_strategy(2)) {
        let table = BilliardTable::new(&two_disk_config()).unwrap();
        let f = table.next_collision(&x).unwrap();
        let back = table.next_collision(&reverse_point(&f.next)).unwrap();
        prop_assert_eq!(back.next.disk_index, x.disk_index);
        prop_assert_eq!(back.next.cell, x.cell);
        prop_assert_eq!(back.kappa, [-f.kappa[0], -f.kappa[1]]);
        prop_assert!(angle_distance(back.next.boundary_angle, x.boundary_angle) < 1e-9);
        prop_assert!((back.next.phi + x.phi).abs() < 1e-9);
    }

    #[test]
    fn orbit_displacement_telescopes(x in phase_point_strategy(1), n in 1usize..40) {
        let table = BilliardTable::new(&LatticeConfig::single_disk(0.3)).unwrap();
        let summary = table.orbit_displacement(&x, n).unwrap();
        let mut cur = x;
        let mut kappa = [0i64; 2];
        let mut max_norm: f64 = 0.0;
        for _ in 0..n {
            let f = table.next_collision(&cur).unwrap();
            kappa = [kappa[0] + f.kappa[0], kappa[1] + f.kappa[1]];
            max_norm = max_norm.max((f.kappa[0] as f64).hypot(f.kappa[1] as f64));
            cur = f.next;
        }
        prop_assert_eq!(summary.kappa, kappa);
        prop_assert_eq!(summary.end, cur);
        prop_assert_eq!(summary.max_norm, max_norm);
        let start = cell_of(table.position(&x), 2);
        let end = cell_of(table.position(&cur), 2);
        prop_assert_eq!(kappa, [end[0] - start[0], end[1] - start[1]]);
    }
}

#[test]
fn tubular_cover_drops_second_component() {
    let planar = BilliardTable::new(&LatticeConfig::single_disk(0.25)).unwrap();
    let tubular = BilliardTable::new(&LatticeConfig::single_disk(0.25).with_dimension(1)).unwrap();
    for x in grid_points(&planar, 20, 20) {
        let a = planar.next_collision(&x).unwrap();
        let b = tubular.next_collision(&x).unwrap();
        assert_eq!(b.kappa, [a.kappa[0], 0]);
        assert_eq!(a.flight_length, b.flight_length);
    }
}

#[test]
fn normal_incidence_returns_along_the_axis() {
    let table = BilliardTable::new(&LatticeConfig::single_disk(0.25)).unwrap();
    // Leaving the rightmost point along the normal hits the next copy head on.
    let f = table.next_collision(&PhasePoint::new(0, 0.0, 0.0)).unwrap();
    assert_eq!(f.kappa, [1, 0]);
    assert!((f.flight_length - 0.5).abs() < 1e-12);
    assert!(angle_distance(f.next.boundary_angle, PI) < 1e-12);
    assert!(f.next.phi.abs() < 1e-12);
    assert!(f.next.phi.abs() < FRAC_PI_2);
}
