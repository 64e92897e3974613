use std::hint::black_box;

use criterion::{criterion_group, criterion_main, BatchSize, BenchmarkId, Criterion, Throughput};
use lorentz_core::dynamics::BilliardTable;
use lorentz_core::montecarlo::{estimate_displacement_laws, LiouvilleSampler};
use lorentz_core::spectral::fourier::support_bound;
use lorentz_core::spectral::{decompose, fourier_inversion_law};
use lorentz_core::tower::{build_tower, exact_displacement_law, make_heavy_tailed_model, SigmaProfile};
use lorentz_core::LatticeConfig;

fn collisions(c: &mut Criterion) {
    let table = BilliardTable::new(&LatticeConfig::single_disk(0.25)).unwrap();
    let sampler = LiouvilleSampler::new(&table, 1);
    let mut g = c.benchmark_group("collision");
    const STEPS: u64 = 1000;
    g.throughput(Throughput::Elements(STEPS));
    g.bench_function("orbit_1000", |b| {
        let mut i = 0;
        b.iter_batched(
            || {
                i += 1;
                sampler.sample(i)
            },
            |x| table.orbit_displacement(&x, STEPS as usize).map(|s| s.kappa),
            BatchSize::SmallInput,
        )
    });
    g.throughput(Throughput::Elements(2000 * 256));
    g.bench_function("histograms_2000x256", |b| {
        b.iter(|| estimate_displacement_laws(&table, black_box(&[64, 256]), 2000, 3, 1).unwrap())
    });
    g.finish();
}

fn oracles(c: &mut Criterion) {
    let base = make_heavy_tailed_model(64, 3.0, SigmaProfile::Unit).unwrap();
    let tower = build_tower(&base).unwrap();
    let mut g = c.benchmark_group("displacement_law");
    g.sample_size(20);
    for n in [8_usize, 32] {
        g.bench_with_input(BenchmarkId::new("dynamic_programming", n), &n, |b, &n| {
            b.iter(|| exact_displacement_law(&tower, n, support_bound(&tower, n)).unwrap())
        });
        g.bench_with_input(BenchmarkId::new("fourier_inversion", n), &n, |b, &n| {
            b.iter(|| fourier_inversion_law(&tower, n).unwrap())
        });
    }
    g.finish();
}

fn eigenvalues(c: &mut Criterion) {
    let base = make_heavy_tailed_model(16, 3.0, SigmaProfile::Cyclic(3)).unwrap();
    let tower = build_tower(&base).unwrap();
    c.bench_function("leading_spectrum_t0.1", |b| {
        b.iter(|| decompose(&tower, black_box([0.1, 0.0])).unwrap())
    });
}

criterion_group!(
    name = kernels;
    config = Criterion::default().sample_size(10).configure_from_args();
    targets = collisions, oracles, eigenvalues
);
criterion_main!(kernels);
